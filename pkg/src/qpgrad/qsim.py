"""Amplitude-level simulation of MDP oracles over labeled qudit registers.

A ``QRegisterSim`` stores a sparse map from basis labels (one integer per
register) to complex amplitudes. Oracles act branch by branch and bump a
per-instance call counter, so the query counts of the trajectory and return
constructions can be read off directly.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .mdp import Mdp, enumerate_trajectories, return_scale
from .policies import Policy

BRANCH_BUDGET = 10**6
NORM_TOL = 1e-10
DEFAULT_BITS = 16


class RegisterBudgetError(RuntimeError):
    pass


class NonZeroTargetError(ValueError):
    """An oracle's output register was not |0> on some branch."""


class NormError(RuntimeError):
    pass


Label = tuple[int, ...]


class QRegisterSim:
    def __init__(self, max_branches: int = BRANCH_BUDGET):
        self.registers: list[tuple[str, int]] = []
        self.amplitudes: dict[Label, complex] = {(): 1.0 + 0j}
        self.counters: Counter = Counter()
        self.max_branches = max_branches

    # -- layout ------------------------------------------------------------
    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.registers):
            if n == name:
                return i
        raise KeyError(f"no register named {name!r}")

    def has_register(self, name: str) -> bool:
        return any(n == name for n, _ in self.registers)

    def add_register(self, name: str, dim: int) -> int:
        if self.has_register(name):
            raise ValueError(f"register {name!r} already exists")
        if dim < 1:
            raise ValueError("register dimension must be positive")
        self.registers.append((name, dim))
        self.amplitudes = {lab + (0,): amp for lab, amp in self.amplitudes.items()}
        return len(self.registers) - 1

    def discard_register(self, name: str, tol: float = 1e-12) -> None:
        """Drop a register that has been returned to |0> on every branch."""
        i = self.index(name)
        residual = sum(abs(a) ** 2 for lab, a in self.amplitudes.items() if lab[i] != 0)
        if residual >= tol:
            raise ValueError(f"register {name!r} not uncomputed (residual {residual:.3e})")
        new: dict[Label, complex] = defaultdict(complex)
        for lab, amp in self.amplitudes.items():
            new[lab[:i] + lab[i + 1:]] += amp
        self.amplitudes = dict(new)
        del self.registers[i]

    # -- evolution ---------------------------------------------------------
    def apply(self, branch_map: Callable[[Label], Iterable[tuple[Label, complex]]],
              counter: str | None = None) -> "QRegisterSim":
        """Apply a linear map given by its action on basis labels.

        The map must be an isometry on the occupied subspace; the norm is
        re-checked afterwards. The simulator is left untouched if the map
        raises.
        """
        new: dict[Label, complex] = defaultdict(complex)
        for lab, amp in self.amplitudes.items():
            for out, c in branch_map(lab):
                new[out] += amp * c
            if len(new) > self.max_branches:
                raise RegisterBudgetError(f"more than {self.max_branches} branches")
        new = {lab: a for lab, a in new.items() if a != 0}
        norm = math.sqrt(sum(abs(a) ** 2 for a in new.values()))
        if abs(norm - 1.0) > NORM_TOL:
            raise NormError(f"norm {norm!r} after applying map")
        self.amplitudes = new
        if counter is not None:
            self.counters[counter] += 1
        return self

    def set_register(self, name: str, value: int) -> None:
        """Basis preparation |0> -> |value> on a freshly added register."""
        i = self.index(name)

        def fn(lab):
            if lab[i] != 0:
                raise NonZeroTargetError(f"register {name!r} not in |0>")
            yield _replace(lab, i, value), 1.0
        self.apply(fn)

    # -- readout -----------------------------------------------------------
    def norm(self) -> float:
        return math.sqrt(sum(abs(a) ** 2 for a in self.amplitudes.values()))

    def marginal(self, name: str) -> dict[int, float]:
        i = self.index(name)
        out: dict[int, float] = defaultdict(float)
        for lab, amp in self.amplitudes.items():
            out[lab[i]] += abs(amp) ** 2
        return dict(sorted(out.items()))

    def probability(self, name: str, value: int) -> float:
        return self.marginal(name).get(value, 0.0)

    def probabilities_over(self, names: Iterable[str]) -> dict[Label, float]:
        idx = [self.index(n) for n in names]
        out: dict[Label, float] = defaultdict(float)
        for lab, amp in self.amplitudes.items():
            out[tuple(lab[i] for i in idx)] += abs(amp) ** 2
        return dict(out)

    def dump(self) -> list[tuple[Label, float, float]]:
        return [(lab, float(a.real), float(a.imag)) for lab, a in sorted(self.amplitudes.items())]

    def counter_dump(self) -> dict[str, int]:
        return dict(sorted(self.counters.items()))


def _replace(lab: Label, i: int, value: int) -> Label:
    return lab[:i] + (int(value),) + lab[i + 1:]


# ---------------------------------------------------------------------------
# Fixed-point numbers


@dataclass(frozen=True)
class FixedPointReturn:
    """Signed b-bit fixed point covering [-scale, scale] with step scale / (2^(b-1) - 1)."""

    bits: int = DEFAULT_BITS
    scale: float = 1.0

    def __post_init__(self):
        if self.bits < 2:
            raise ValueError("need at least 2 bits")
        if self.scale <= 0:
            raise ValueError("scale must be positive")

    @property
    def max_label(self) -> int:
        return 2 ** (self.bits - 1) - 1

    @property
    def step(self) -> float:
        return self.scale / self.max_label

    @property
    def dim(self) -> int:
        return 2 ** self.bits

    def encode(self, x: float) -> int:
        q = int(round(x / self.step))
        if abs(q) > self.max_label:
            raise OverflowError(f"{x!r} outside the {self.bits}-bit range +-{self.scale}")
        return q

    def decode(self, label: int) -> float:
        return label * self.step

    def check(self, label: int) -> int:
        if abs(label) > self.max_label:
            raise OverflowError(f"accumulator label {label} overflows {self.bits} bits")
        return label

    def to_unsigned(self, label: int) -> int:
        """Two's-complement basis index of a signed label."""
        return label % self.dim


def reward_format(mdp: Mdp, bits: int = DEFAULT_BITS) -> FixedPointReturn:
    return FixedPointReturn(bits, mdp.r_max)


def return_format(mdp: Mdp, bits: int = DEFAULT_BITS) -> FixedPointReturn:
    return FixedPointReturn(bits, return_scale(mdp))


def quantized_returns(mdp: Mdp, rewards, bits: int = DEFAULT_BITS) -> np.ndarray:
    """Return labels built from quantized per-step rewards, as the return unitary does.

    ``rewards`` has shape (n, T); rounding is half-to-even like ``round``.
    """
    rf, gf = reward_format(mdp, bits), return_format(mdp, bits)
    rewards = np.atleast_2d(np.asarray(rewards, dtype=float))
    r_q = np.round(rewards / rf.step) * rf.step
    totals = r_q @ (mdp.gamma ** np.arange(rewards.shape[1]))
    labels = np.round(totals / gf.step).astype(np.int64)
    if np.any(np.abs(labels) > gf.max_label):
        raise OverflowError("return outside the fixed-point range")
    return labels


def quantized_return(mdp: Mdp, rewards: Iterable[float], bits: int = DEFAULT_BITS) -> int:
    return int(quantized_returns(mdp, [list(rewards)], bits)[0])


# ---------------------------------------------------------------------------
# Oracles


def apply_P_oracle(sim: QRegisterSim, mdp: Mdp, state_reg: str, action_reg: str,
                   target_reg: str) -> QRegisterSim:
    """|s, a>|0> -> |s, a> sum_s' sqrt(P(s'|s, a)) |s'>."""
    i, j, k = sim.index(state_reg), sim.index(action_reg), sim.index(target_reg)
    roots = np.sqrt(mdp.transition)

    def fn(lab):
        if lab[k] != 0:
            raise NonZeroTargetError(f"target register {target_reg!r} not in |0>")
        row = roots[lab[i], lab[j]]
        for s2 in np.flatnonzero(row):
            yield _replace(lab, k, s2), row[s2]
    return sim.apply(fn, "P")


def apply_policy_unitary(sim: QRegisterSim, policy: Policy, state_reg: str, action_reg: str,
                         theta=None) -> QRegisterSim:
    """|s>|0> -> |s> sum_a sqrt(pi_theta(a|s)) |a>, by direct amplitude loading."""
    if theta is not None:
        policy = policy.with_theta(theta)
    i, j = sim.index(state_reg), sim.index(action_reg)
    roots = np.sqrt(np.clip(policy.prob_table(), 0.0, None))

    def fn(lab):
        if lab[j] != 0:
            raise NonZeroTargetError(f"action register {action_reg!r} not in |0>")
        row = roots[lab[i]]
        for a in np.flatnonzero(row):
            yield _replace(lab, j, a), row[a]
    return sim.apply(fn, "Pi")


def apply_R_oracle(sim: QRegisterSim, mdp: Mdp, state_reg: str, action_reg: str,
                   accumulator: str, fmt: FixedPointReturn, weight: float = 1.0,
                   sign: int = 1) -> QRegisterSim:
    """Add sign * quantized(weight * R(s, a)) into a signed fixed-point accumulator.

    ``sign=-1`` undoes a previous application with the same weight.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    i, j, k = sim.index(state_reg), sim.index(action_reg), sim.index(accumulator)
    inc = {(s, a): fmt.encode(weight * mdp.reward[s, a])
           for s in range(mdp.n_states) for a in range(mdp.n_actions)}

    def fn(lab):
        yield _replace(lab, k, fmt.check(lab[k] + sign * inc[lab[i], lab[j]])), 1.0
    return sim.apply(fn, "R")


def state_register(t: int) -> str:
    return f"s{t}"


def action_register(t: int) -> str:
    return f"a{t}"


def build_trajectory_superposition(sim: QRegisterSim, mdp: Mdp, policy: Policy,
                                   T: int | None = None) -> QRegisterSim:
    """Prepare sum_tau sqrt(P_theta(tau)) |s0, a0, s1, ..., a_{T-1}, s_T>.

    Uses T policy-unitary calls and T transition-oracle calls.
    """
    T = mdp.horizon if T is None else T
    sim.add_register(state_register(0), mdp.n_states)
    if mdp.start_state:
        sim.set_register(state_register(0), mdp.start_state)
    for t in range(T):
        sim.add_register(action_register(t), mdp.n_actions)
        apply_policy_unitary(sim, policy, state_register(t), action_register(t))
        sim.add_register(state_register(t + 1), mdp.n_states)
        apply_P_oracle(sim, mdp, state_register(t), action_register(t), state_register(t + 1))
    return sim


def apply_return_unitary(sim: QRegisterSim, mdp: Mdp, T: int | None = None,
                         bits: int = DEFAULT_BITS, name: str = "ret") -> QRegisterSim:
    """|tau>|0> -> |tau>|R(tau)>: compute T rewards, sum them, uncompute the rewards.

    Uses 2T reward-oracle calls.
    """
    T = mdp.horizon if T is None else T
    rf, gf = reward_format(mdp, bits), return_format(mdp, bits)
    rewards = [f"r{t}" for t in range(T)]
    for t, r in enumerate(rewards):
        sim.add_register(r, rf.dim)
        apply_R_oracle(sim, mdp, state_register(t), action_register(t), r, rf)
    sim.add_register(name, gf.dim)
    idx = [sim.index(r) for r in rewards]
    k = sim.index(name)
    weights = mdp.gamma ** np.arange(T)

    def accumulate(lab):
        if lab[k] != 0:
            raise NonZeroTargetError(f"return register {name!r} not in |0>")
        total = float(np.array([rf.decode(lab[i]) for i in idx]) @ weights)
        yield _replace(lab, k, gf.encode(total)), 1.0
    sim.apply(accumulate)
    for t, r in enumerate(rewards):
        apply_R_oracle(sim, mdp, state_register(t), action_register(t), r, rf, sign=-1)
        sim.discard_register(r)
    return sim


def normalized_shift(x: float, scale: float) -> float:
    """R_hat = (R / scale + 1) / 2, mapping [-scale, scale] onto [0, 1]."""
    return min(1.0, max(0.0, (x / scale + 1.0) / 2.0))


def unshift_value(p0: float, scale: float) -> float:
    return (2.0 * p0 - 1.0) * scale


def probability_oracle_value(mdp: Mdp, policy: Policy, theta=None, bits: int = DEFAULT_BITS,
                             sim: QRegisterSim | None = None) -> tuple[QRegisterSim, float]:
    """Rotate an ancilla so that P(ancilla = 0) = sum_tau P_theta(tau) R_hat(tau)."""
    if mdp.gamma >= 1.0:
        raise ValueError("the probability oracle normalisation needs gamma < 1")
    if theta is not None:
        policy = policy.with_theta(theta)
    sim = QRegisterSim() if sim is None else sim
    build_trajectory_superposition(sim, mdp, policy)
    apply_return_unitary(sim, mdp, bits=bits)
    gf = return_format(mdp, bits)
    sim.add_register("anc", 2)
    k, anc = sim.index("ret"), sim.index("anc")

    def rotate(lab):
        r = normalized_shift(gf.decode(lab[k]), gf.scale)
        yield _replace(lab, anc, 0), math.sqrt(r)
        yield _replace(lab, anc, 1), math.sqrt(1.0 - r)
    sim.apply(rotate)
    return sim, sim.probability("anc", 0)


def phase_oracle_cost(eps_phase: float) -> int:
    """Probability-oracle calls charged for one phase-oracle call at precision eps_phase."""
    if not 0 < eps_phase < 1:
        raise ValueError("eps_phase must lie in (0, 1)")
    return max(1, math.ceil(-math.log2(eps_phase) - 1e-12))


def phase_from_value(v: float) -> complex:
    return complex(np.exp(1j * v))


def phase_oracle_value(mdp: Mdp, policy: Policy, theta, eps_phase: float,
                       bits: int = DEFAULT_BITS) -> tuple[complex, int]:
    """Idealised phase e^{i V_shifted(theta)} and its modelled probability-oracle cost."""
    _, p0 = probability_oracle_value(mdp, policy, theta, bits)
    return phase_from_value(p0), phase_oracle_cost(eps_phase)


def shifted_value_enumerated(mdp: Mdp, policy: Policy, bits: int = DEFAULT_BITS) -> float:
    """sum_tau P_theta(tau) R_hat_q(tau) from classical enumeration (no register simulation)."""
    table = enumerate_trajectories(mdp, policy)
    gf = return_format(mdp, bits)
    labels = quantized_returns(mdp, mdp.reward[table.states[:, :-1], table.actions], bits)
    rhat = np.clip((labels * gf.step / gf.scale + 1.0) / 2.0, 0.0, 1.0)
    return float(table.probs @ rhat)
