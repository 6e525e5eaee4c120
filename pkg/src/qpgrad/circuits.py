"""Exact statevector simulation of small parametrized circuits.

Qubit 0 is the most significant bit of the basis index. Rotations follow the
convention R_G(angle) = exp(-i * angle * G / 2) for a Pauli G, so every
trainable generator G/2 has eigenvalues +-1/2 and the pi/2 shift rule is exact.
The angle of a rotation is ``theta[param]`` (if bound) plus the input-encoding
angle ``encoding[s][slot]`` (if bound).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MAX_QUBITS = 10

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
ROTATIONS = {"rx": "x", "ry": "y", "rz": "z"}
ENTANGLERS = ("cz", "cx")


@dataclass(frozen=True)
class Gate:
    kind: str
    wires: tuple[int, ...]
    param: int | None = None
    slot: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.lower())
        object.__setattr__(self, "wires", tuple(int(w) for w in self.wires))
        if self.kind in ROTATIONS:
            if len(self.wires) != 1:
                raise ValueError(f"{self.kind} acts on one wire")
        elif self.kind in ENTANGLERS:
            if len(self.wires) != 2 or self.wires[0] == self.wires[1]:
                raise ValueError(f"{self.kind} acts on two distinct wires")
            if self.param is not None or self.slot is not None:
                raise ValueError("entangling gates carry no angle")
        else:
            raise ValueError(f"unknown gate {self.kind!r}")

    def to_dict(self) -> dict:
        out = {"gate": self.kind, "wires": list(self.wires)}
        if self.param is not None:
            out["param"] = self.param
        if self.slot is not None:
            out["slot"] = self.slot
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Gate":
        return cls(data["gate"], tuple(data["wires"]), data.get("param"), data.get("slot"))


@dataclass(frozen=True, eq=False)
class PqcCircuit:
    """Gate list plus a per-state table of encoding angles (shape (S, n_slots))."""

    n_qubits: int
    gates: tuple[Gate, ...]
    state_encoding: np.ndarray = field(default_factory=lambda: np.zeros((1, 0)))

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        enc = np.asarray(self.state_encoding, dtype=float)
        if enc.ndim == 1:
            enc = enc[:, None]
        object.__setattr__(self, "state_encoding", enc)
        if not 1 <= self.n_qubits <= MAX_QUBITS:
            raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}]")
        for g in self.gates:
            if any(not 0 <= w < self.n_qubits for w in g.wires):
                raise ValueError(f"gate {g} addresses a missing wire")
            if g.slot is not None and not 0 <= g.slot < enc.shape[1]:
                raise ValueError(f"gate {g} uses encoding slot outside table")
        params = [g.param for g in self.gates if g.param is not None]
        if params:
            counts = np.bincount(params)
            if counts.min() == 0:
                raise ValueError("every parameter index must be bound to a rotation")
            if counts.max() > 1:
                raise ValueError("each parameter may be bound to exactly one rotation")

    @property
    def n_params(self) -> int:
        return 1 + max((g.param for g in self.gates if g.param is not None), default=-1)

    @property
    def n_states(self) -> int:
        return self.state_encoding.shape[0]

    @property
    def dim(self) -> int:
        return 2 ** self.n_qubits

    def to_dict(self) -> dict:
        return {
            "n_qubits": self.n_qubits,
            "gates": [g.to_dict() for g in self.gates],
            "state_encoding": self.state_encoding.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PqcCircuit":
        return cls(data["n_qubits"], tuple(Gate.from_dict(g) for g in data["gates"]),
                   np.array(data["state_encoding"], dtype=float))


def rotation_matrices(axis: str, angles: np.ndarray) -> np.ndarray:
    """Batched exp(-i angle G/2), shape (B, 2, 2)."""
    c = np.cos(angles / 2)[:, None, None]
    s = np.sin(angles / 2)[:, None, None]
    return c * np.eye(2) - 1j * s * PAULI[axis]


def _apply_1q(psi: np.ndarray, mats: np.ndarray, wire: int) -> np.ndarray:
    # psi: (B, 2, ..., 2); wire axis is wire + 1
    psi = np.moveaxis(psi, wire + 1, -1)
    psi = np.einsum("bij,b...j->b...i", mats, psi)
    return np.moveaxis(psi, -1, wire + 1)


def _apply_2q(psi: np.ndarray, kind: str, control: int, target: int) -> np.ndarray:
    psi = psi.copy()
    idx = [slice(None)] * psi.ndim
    idx[control + 1] = 1
    if kind == "cz":
        idx[target + 1] = 1
        psi[tuple(idx)] *= -1
    else:
        sub = psi[tuple(idx)]
        t_axis = target if target < control else target - 1
        psi[tuple(idx)] = np.flip(sub, axis=t_axis + 1)
    return psi


def simulate_batch(circuit: PqcCircuit, s: int, phis: np.ndarray) -> np.ndarray:
    """States U(s, phi)|0...0> for a batch of parameter vectors, shape (B, 2^n)."""
    phis = np.atleast_2d(np.asarray(phis, dtype=float))
    if phis.shape[1] != circuit.n_params:
        raise ValueError(f"expected {circuit.n_params} parameters, got {phis.shape[1]}")
    B, n = phis.shape[0], circuit.n_qubits
    psi = np.zeros((B,) + (2,) * n, dtype=complex)
    psi[(slice(None),) + (0,) * n] = 1.0
    enc = circuit.state_encoding[s]
    for g in circuit.gates:
        if g.kind in ROTATIONS:
            angles = np.zeros(B)
            if g.param is not None:
                angles = angles + phis[:, g.param]
            if g.slot is not None:
                angles = angles + enc[g.slot]
            psi = _apply_1q(psi, rotation_matrices(ROTATIONS[g.kind], angles), g.wires[0])
        else:
            psi = _apply_2q(psi, g.kind, *g.wires)
    return psi.reshape(B, -1)


def simulate_state(circuit: PqcCircuit, s: int, phi) -> np.ndarray:
    """|psi_{s,phi}> as a flat amplitude vector of length 2^n."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (circuit.n_params,):
        raise ValueError(f"expected {circuit.n_params} parameters, got shape {phi.shape}")
    return simulate_batch(circuit, s, phi[None, :])[0]


def circuit_unitary(circuit: PqcCircuit, s: int, phi) -> np.ndarray:
    """Full 2^n x 2^n unitary, built column by column."""
    phi = np.asarray(phi, dtype=float)
    n, dim = circuit.n_qubits, circuit.dim
    cols = np.eye(dim, dtype=complex).reshape((dim,) + (2,) * n)
    enc = circuit.state_encoding[s]
    psi = cols
    for g in circuit.gates:
        if g.kind in ROTATIONS:
            angle = (phi[g.param] if g.param is not None else 0.0) + (
                enc[g.slot] if g.slot is not None else 0.0)
            mats = np.repeat(rotation_matrices(ROTATIONS[g.kind], np.array([angle])), dim, axis=0)
            psi = _apply_1q(psi, mats, g.wires[0])
        else:
            psi = _apply_2q(psi, g.kind, *g.wires)
    return psi.reshape(dim, dim).T
