"""Smoothness certificates (D for raw-PQC, B_1 for softmax_1-PQC) over random instances."""
import argparse
import sys

import numpy as np

from qpgrad.circuits import Gate, PqcCircuit
from qpgrad.policies import RawPqcPolicy, Softmax1PqcPolicy
from qpgrad.smoothness import certify, estimate_Bp, random_grid


def random_raw_pqc(rng) -> RawPqcPolicy:
    n_q, d = int(rng.integers(1, 4)), int(rng.integers(1, 5))
    gates = [Gate("rx", (q,), slot=0) for q in range(n_q)]
    for i in range(d):
        gates.append(Gate(str(rng.choice(["rx", "ry", "rz"])), (int(rng.integers(n_q)),), param=i))
        if n_q > 1:
            a, b = rng.choice(n_q, 2, replace=False)
            gates.append(Gate(str(rng.choice(["cz", "cx"])), (int(a), int(b))))
    circuit = PqcCircuit(n_q, tuple(gates), rng.uniform(-np.pi, np.pi, (2, 1)))
    A = int(rng.integers(2, 2**n_q + 1))
    part = np.concatenate([np.arange(A), rng.integers(0, A, 2**n_q - A)])
    return RawPqcPolicy(circuit, rng.permutation(part), np.zeros(d), A)


def random_softmax1(rng) -> Softmax1PqcPolicy:
    n_q = int(rng.integers(1, 4))
    gates = [Gate("ry", (q,), slot=q) for q in range(n_q)]
    if n_q > 1:
        gates.append(Gate("cx", (0, n_q - 1)))
    gates += [Gate("rx", (q,), slot=n_q + q) for q in range(n_q)]
    circuit = PqcCircuit(n_q, tuple(gates), rng.uniform(-np.pi, np.pi, (2, 2 * n_q)))
    fams, ws = [], []
    for _ in range(int(rng.integers(2, 4))):
        k = int(rng.integers(1, 2**n_q + 1))
        fams.append(rng.permutation(np.concatenate([np.arange(k),
                                                    rng.integers(0, k, 2**n_q - k)])))
        ws.append(rng.normal(0, 2, k))
    return Softmax1PqcPolicy(circuit, fams, ws)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--grid-points", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(args.seed)

    worst_D = max(certify(p, random_grid(p, args.grid_points, rng), with_B=False).D
                  for p in (random_raw_pqc(rng) for _ in range(args.instances)))
    worst_B = max(estimate_Bp(p, 1, random_grid(p, args.grid_points, rng, scale=5.0)).value
                  for p in (random_softmax1(rng) for _ in range(args.instances)))
    print(f"raw-PQC       max D   = {worst_D:.12f}  (certified <= 1)")
    print(f"softmax_1-PQC max B_1 = {worst_B:.12f}  (certified <= 2)")
    return 0 if worst_D <= 1 + 1e-9 and worst_B <= 2 + 1e-9 else 2


if __name__ == "__main__":
    sys.exit(main())
