"""Smoothness constants of policies and Gevrey bounds on value functions.

D_k and B_p are maximised over finite parameter grids, so reported values are
lower bounds on the true suprema. The analytic certificates (D <= 1 for
raw-PQC, B_1 <= 2 for softmax_1-PQC) supply the matching upper bounds.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .mdp import Mdp, exact_value
from .policies import Policy, RawPqcPolicy, multi_indices

MAX_PARTITION_K = 12
MAX_DK_ORDER = 3


# ---------------------------------------------------------------------------
# Partitions and the combinatorial bound


@dataclass(frozen=True)
class Partition:
    parts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(sorted(self.parts, reverse=True)))
        if any(p < 1 for p in self.parts):
            raise ValueError("parts must be positive")

    @property
    def k(self) -> int:
        return sum(self.parts)

    def __len__(self) -> int:
        return len(self.parts)

    @property
    def multiplicities(self) -> dict[int, int]:
        return dict(Counter(self.parts))


def enumerate_partitions(k: int) -> list[Partition]:
    """All partitions of k, largest part first, in reverse lexicographic order."""
    if not 1 <= k <= MAX_PARTITION_K:
        raise ValueError(f"k must lie in [1, {MAX_PARTITION_K}]")
    out: list[Partition] = []

    def rec(remaining: int, largest: int, prefix: tuple[int, ...]):
        if remaining == 0:
            out.append(Partition(prefix))
            return
        for part in range(min(remaining, largest), 0, -1):
            rec(remaining - part, part, prefix + (part,))

    rec(k, k, ())
    return out


def multinomial(n: int, parts: Sequence[int]) -> int:
    out = math.factorial(n)
    for p in parts:
        out //= math.factorial(p)
    return out


def partition_weight(lam: Partition, t: int) -> int:
    """Number of ways the k derivatives spread over t+1 policy factors as lam."""
    return (multinomial(lam.k, lam.parts)
            * multinomial(len(lam), lam.multiplicities.values())
            * math.comb(t + 1, len(lam)))


def gevrey_g_bound(k: int, t: int, D_list: Sequence[float], r_max: float, gamma: float) -> float:
    """Upper bound on g(k, t), the order-k derivative of V^(t+1) - V^(t).

    ``D_list[l - 1]`` is D_l.
    """
    if k == 0:
        return gamma ** t * r_max
    if len(D_list) < k:
        raise ValueError(f"need D_1..D_{k}")
    total = 0.0
    for lam in enumerate_partitions(k):
        total += partition_weight(lam, t) * math.prod(D_list[l - 1] for l in lam.parts)
    return gamma ** t * r_max * total


def gevrey_U_sum(k: int, t: int, D_list: Sequence[float], r_max: float, gamma: float) -> float:
    """sum_{t' < t} of the g bounds."""
    return sum(gevrey_g_bound(k, tp, D_list, r_max, gamma) for tp in range(t))


def gevrey_U_bound(k: int, t: int, D: float, r_max: float, gamma: float) -> float:
    """Closed form U(k, t) <= 2 r_max / (1 - gamma) (gamma D t^2)^k, valid for gamma >= 2/t."""
    if t < 1 or gamma < 2 / t:
        raise ValueError(f"precondition gamma >= 2/t violated (gamma={gamma}, t={t})")
    return 2 * r_max / (1 - gamma) * (gamma * D * t * t) ** k


# ---------------------------------------------------------------------------
# Policy smoothness constants


@dataclass(frozen=True)
class Witness:
    value: float
    state: int
    theta: tuple[float, ...]
    alpha: tuple[int, ...] = ()
    action: int | None = None


def _raw_pqc_Dk(policy: RawPqcPolicy, k: int, grid: np.ndarray) -> Witness:
    """Batched evaluation: every (grid point, alpha, shift) in one simulation per state."""
    d = policy.n_params
    alphas = list(multi_indices(d, k))
    blocks = [policy.shift_terms(alpha) for alpha in alphas]
    best = Witness(-1.0, 0, ())
    for s in range(policy.n_states):
        for alpha, terms in zip(alphas, blocks):
            omegas = np.array([w for w, _ in terms])
            coefs = np.array([c for _, c in terms])
            pts = (grid[:, None, :] + omegas[None, :, :]).reshape(-1, d)
            vals = policy.action_probs_batch(s, pts).reshape(len(grid), len(terms), -1)
            deriv = np.einsum("w,gwa->ga", coefs, vals)
            sums = np.abs(deriv).sum(axis=1)
            g = int(np.argmax(sums))
            if sums[g] > best.value:
                best = Witness(float(sums[g]), s, tuple(grid[g]), alpha)
    return best


def dk_at(policy: Policy, s: int, alpha: Sequence[int]) -> float:
    return float(np.abs(policy.prob_derivative(s, alpha)).sum())


def estimate_Dk(policy: Policy, k: int, grid) -> Witness:
    """max over grid points, states and multi-indices of sum_a |d_alpha pi(a|s)|."""
    if not 1 <= k <= MAX_DK_ORDER:
        raise ValueError(f"derivative order k must lie in [1, {MAX_DK_ORDER}]")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.shape[1] != policy.n_params:
        raise ValueError("grid points must have one coordinate per parameter")
    if isinstance(policy, RawPqcPolicy):
        return _raw_pqc_Dk(policy, k, grid)
    best = Witness(-1.0, 0, ())
    for theta in grid:
        pol = policy.with_theta(theta)
        for s in range(policy.n_states):
            for alpha in multi_indices(policy.n_params, k):
                v = dk_at(pol, s, alpha)
                if v > best.value:
                    best = Witness(v, s, tuple(theta), alpha)
    return best


def estimate_Bp(policy: Policy, p: float, grid) -> Witness:
    """max over grid points and (s, a) of ||grad log pi(a|s)||_p."""
    if p not in (1, 2, np.inf, math.inf):
        raise ValueError("p must be 1, 2 or inf")
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    best = Witness(-1.0, 0, ())
    for theta in grid:
        pol = policy.with_theta(theta)
        for s in range(pol.n_states):
            for a in range(pol.n_actions):
                v = float(np.linalg.norm(pol.log_policy_gradient(s, a), ord=p))
                if v > best.value:
                    best = Witness(v, s, tuple(theta), action=a)
    return best


def recheck_witness(policy: Policy, w: Witness, kind: str, p: float = 1) -> float:
    pol = policy.with_theta(np.array(w.theta))
    if kind == "D":
        return dk_at(pol, w.state, w.alpha)
    return float(np.linalg.norm(pol.log_policy_gradient(w.state, w.action), ord=p))


def random_grid(policy: Policy, n_points: int, seed, scale: float = np.pi) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(n_points, policy.n_params))


@dataclass
class SmoothnessCertificate:
    policy_id: str
    grid_points: int
    n_states: int
    Dk: dict[int, Witness] = field(default_factory=dict)
    Bp: dict[str, Witness] = field(default_factory=dict)

    @property
    def D(self) -> float:
        return max((max(w.value, 0.0) ** (1 / k) for k, w in self.Dk.items()), default=0.0)

    def verify_witnesses(self, policy: Policy, tol: float = 1e-9) -> bool:
        ok = all(abs(recheck_witness(policy, w, "D") - w.value) <= tol for w in self.Dk.values())
        for key, w in self.Bp.items():
            p = math.inf if key == "inf" else float(key)
            ok &= abs(recheck_witness(policy, w, "B", p) - w.value) <= tol
        return ok

    def to_dict(self) -> dict:
        return {
            "policy": self.policy_id,
            "grid": {"states": self.n_states, "parameter_points": self.grid_points},
            "D": self.D,
            "D_k": {str(k): asdict(w) for k, w in self.Dk.items()},
            "B_p": {p: asdict(w) for p, w in self.Bp.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def certify(policy: Policy, grid, policy_id: str = "policy", k_max: int = MAX_DK_ORDER,
            ps: Sequence = (1, 2, "inf"), with_B: bool = True) -> SmoothnessCertificate:
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    cert = SmoothnessCertificate(policy_id, len(grid), policy.n_states)
    for k in range(1, k_max + 1):
        cert.Dk[k] = estimate_Dk(policy, k, grid)
    if with_B:
        for p in ps:
            cert.Bp[str(p)] = estimate_Bp(policy, math.inf if p == "inf" else p, grid)
    return cert


# ---------------------------------------------------------------------------
# Value-function Gevrey verification


def _value_fn(mdp: Mdp, policy: Policy, t: int):
    s0 = mdp.start_state

    def f(theta):
        return exact_value(mdp, policy.with_theta(theta), t)[s0]
    return f


def _fd_derivative(f, theta: np.ndarray, alpha: tuple[int, ...], h: float) -> float:
    """Central differences: 3-point first derivatives, 4-point mixed/pure second."""
    e = np.eye(len(theta))
    if len(alpha) == 0:
        return f(theta)
    if len(alpha) == 1:
        i = alpha[0]
        return (f(theta + h * e[i]) - f(theta - h * e[i])) / (2 * h)
    i, j = alpha
    if i == j:
        return (f(theta + h * e[i]) - 2 * f(theta) + f(theta - h * e[i])) / h ** 2
    return (f(theta + h * (e[i] + e[j])) - f(theta + h * (e[i] - e[j]))
            - f(theta - h * (e[i] - e[j])) + f(theta - h * (e[i] + e[j]))) / (4 * h * h)


def richardson_derivative(f, theta, alpha, h: float = 1e-2, rtol: float = 1e-5
                          ) -> tuple[float, bool]:
    """Richardson-extrapolated central difference and a convergence flag.

    Two extrapolations (from steps h, h/2 and h/2, h/4) must agree to ``rtol``
    relative (absolute below 1e-8).
    """
    theta = np.asarray(theta, dtype=float)
    d = [_fd_derivative(f, theta, tuple(alpha), h / 2 ** i) for i in range(3)]
    r1 = (4 * d[1] - d[0]) / 3
    r2 = (4 * d[2] - d[1]) / 3
    converged = abs(r2 - r1) <= rtol * max(abs(r2), 1e-3)
    return r2, converged


@dataclass
class GevreyEntry:
    t: int
    alpha: tuple[int, ...]
    derivative: float
    partition_bound: float
    U_bound: float
    gevrey_bound: float
    converged: bool

    @property
    def ratio(self) -> float:
        return abs(self.derivative) / self.U_bound


@dataclass
class GevreyReport:
    entries: list[GevreyEntry]
    D: float
    M: float

    @property
    def max_ratio(self) -> float:
        return max((e.ratio for e in self.entries), default=0.0)

    @property
    def ok(self) -> bool:
        return all(e.converged
                   and abs(e.derivative) <= e.partition_bound * (1 + 1e-9)
                   and e.partition_bound <= e.U_bound * (1 + 1e-12)
                   and e.U_bound <= e.gevrey_bound * (1 + 1e-12)
                   for e in self.entries)

    def failures(self) -> list[GevreyEntry]:
        return [e for e in self.entries if not (
            e.converged and abs(e.derivative) <= e.partition_bound * (1 + 1e-9)
            and e.U_bound <= e.gevrey_bound * (1 + 1e-12))]


def verify_value_gevrey(mdp: Mdp, policy: Policy, k_max: int = 2, t_max: int = 6,
                        D: float = 1.0, t_min: int = 1) -> GevreyReport:
    """Check |d_alpha V^(t)(s0)| against the partition-sum, U(k,t) and (M/2) c^k bounds.

    Horizons with gamma * t < 2 are skipped; c = D t^2 at horizon t.
    """
    if k_max > 2:
        raise ValueError("finite-difference verification supports |alpha| <= 2")
    M = 4 * mdp.r_max / (1 - mdp.gamma)
    theta = policy.theta
    entries = []
    for t in range(t_min, t_max + 1):
        if mdp.gamma * t < 2:
            continue
        f = _value_fn(mdp, policy, t)
        for k in range(0, k_max + 1):
            D_list = [D ** l for l in range(1, k + 1)]
            part = gevrey_U_sum(k, t, D_list, mdp.r_max, mdp.gamma)
            U = gevrey_U_bound(k, t, D, mdp.r_max, mdp.gamma)
            G = M / 2 * (D * t * t) ** k
            for alpha in multi_indices(policy.n_params, k):
                if k == 0:
                    val, conv = f(theta), True
                else:
                    val, conv = richardson_derivative(f, theta, alpha)
                entries.append(GevreyEntry(t, tuple(alpha), float(val), part, U, G, conv))
    return GevreyReport(entries, D, M)
