"""Tabular MDPs, exact dynamic-programming oracles and trajectory sampling.

Everything here is exact or seeded: values come from the finite-horizon
backward recursion, gradients from exhaustive trajectory enumeration, and
sampling from ``numpy.random.Generator`` streams derived from integer seeds.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .policies import Policy

ENUMERATION_CAP = 10**6
ROW_SUM_TOL = 1e-12
LOG_PROB_FLOOR = 1e-300


class DegenerateProbabilityError(ValueError):
    """A trajectory probability fell below the representable floor."""


class EnumerationCapError(RuntimeError):
    """Exhaustive enumeration would exceed the configured trajectory cap."""


@dataclass(frozen=True, eq=False)
class Mdp:
    """Finite-horizon tabular MDP.

    ``transition[s, a, s']`` is P(s'|s,a) and ``reward[s, a]`` is R(s,a).
    """

    transition: np.ndarray
    reward: np.ndarray
    gamma: float
    horizon: int
    r_max: float
    start_state: int = 0
    name: str = "mdp"

    def __post_init__(self):
        object.__setattr__(self, "transition", np.asarray(self.transition, dtype=float))
        object.__setattr__(self, "reward", np.asarray(self.reward, dtype=float))
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "r_max", float(self.r_max))
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "start_state", int(self.start_state))

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def with_horizon(self, horizon: int) -> "Mdp":
        return Mdp(self.transition, self.reward, self.gamma, horizon, self.r_max,
                   self.start_state, self.name)

    def with_gamma(self, gamma: float) -> "Mdp":
        return Mdp(self.transition, self.reward, gamma, self.horizon, self.r_max,
                   self.start_state, self.name)

    @classmethod
    def from_infinite_horizon(cls, transition, reward, gamma, r_max, epsilon,
                              start_state=0, name="mdp") -> "Mdp":
        """Truncate an infinite-horizon MDP at its effective horizon."""
        horizon = effective_horizon(r_max, gamma, epsilon)
        return cls(transition, reward, gamma, horizon, r_max, start_state, name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "reward": self.reward.tolist(),
            "gamma": self.gamma,
            "horizon": self.horizon,
            "r_max": self.r_max,
            "start_state": self.start_state,
        }


@dataclass
class ValidationResult:
    violations: list[str] = field(default_factory=list)
    details: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, code: str, detail: str) -> None:
        if code not in self.violations:
            self.violations.append(code)
        self.details.append(f"{code}: {detail}")


def validate_mdp(mdp: Mdp) -> ValidationResult:
    """Check every structural invariant; never raises."""
    result = ValidationResult()
    P, R = mdp.transition, mdp.reward
    if P.ndim != 3 or P.shape[0] != P.shape[2]:
        result.add("shape", f"transition must be [S][A][S], got {P.shape}")
        return result
    if R.shape != P.shape[:2]:
        result.add("shape", f"reward must be [S][A]={P.shape[:2]}, got {R.shape}")
        return result
    if np.any(P < 0) or np.any(P > 1):
        result.add("prob-range", "transition entries outside [0, 1]")
    sums = P.sum(axis=2)
    bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOL)
    for s, a in bad:
        result.add("row-sum", f"P(.|{s},{a}) sums to {sums[s, a]!r}")
    if not mdp.r_max > 0:
        result.add("r-max", f"r_max must be positive, got {mdp.r_max}")
    if np.any(np.abs(R) > mdp.r_max):
        result.add("reward-bound", f"max |R| = {np.abs(R).max()} exceeds r_max = {mdp.r_max}")
    if not 0.0 <= mdp.gamma <= 1.0:
        result.add("gamma-range", f"gamma = {mdp.gamma} not in [0, 1]")
    if mdp.horizon < 1:
        result.add("horizon", f"horizon must be a positive integer, got {mdp.horizon}")
    if not 0 <= mdp.start_state < mdp.n_states:
        result.add("start-state", f"start_state {mdp.start_state} out of range")
    return result


def load_mdp(path) -> Mdp:
    """Parse an MDP definition file (JSON); rejects any invariant violation."""
    data = json.loads(Path(path).read_text())
    return mdp_from_dict(data)


def mdp_from_dict(data: dict) -> Mdp:
    required = ("n_states", "n_actions", "transition", "reward", "gamma", "horizon",
                "r_max", "start_state")
    missing = [k for k in required if k not in data]
    if missing:
        raise ValueError(f"MDP file missing fields: {missing}")
    if data["horizon"] is None or (isinstance(data["horizon"], float) and math.isinf(data["horizon"])):
        raise ValueError("horizon must be finite; truncate with effective_horizon first")
    mdp = Mdp(
        transition=np.array(data["transition"], dtype=float),
        reward=np.array(data["reward"], dtype=float),
        gamma=data["gamma"],
        horizon=data["horizon"],
        r_max=data["r_max"],
        start_state=data["start_state"],
        name=data.get("name", "mdp"),
    )
    if mdp.transition.shape[:2] != (data["n_states"], data["n_actions"]):
        raise ValueError(
            f"transition shape {mdp.transition.shape} disagrees with "
            f"n_states={data['n_states']}, n_actions={data['n_actions']}")
    check = validate_mdp(mdp)
    if not check.ok:
        raise ValueError("invalid MDP: " + "; ".join(check.details))
    return mdp


def save_mdp(mdp: Mdp, path) -> None:
    Path(path).write_text(json.dumps(mdp.to_dict(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Returns, bounds, horizons


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    rewards = np.asarray(rewards, dtype=float)
    if rewards.size == 0:
        raise ValueError("empty step list")
    return float(np.sum(rewards * gamma ** np.arange(rewards.size)))


def return_scale(mdp: Mdp) -> float:
    """Largest attainable |R(tau)|: r_max * sum_{t<T} gamma^t."""
    if mdp.gamma == 1.0:
        return mdp.r_max * mdp.horizon
    return mdp.r_max * (1.0 - mdp.gamma ** mdp.horizon) / (1.0 - mdp.gamma)


def value_bound(mdp: Mdp) -> float:
    discount = math.inf if mdp.gamma >= 1.0 else 1.0 / (1.0 - mdp.gamma)
    return min(mdp.horizon, discount) * mdp.r_max


def effective_horizon(r_max: float, gamma: float, epsilon: float) -> int:
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    ratio = math.log(epsilon * (1.0 - gamma) / r_max) / math.log(gamma)
    # guard against ceil(1.0000000000000002)
    return max(1, math.ceil(ratio - 1e-12))


# ---------------------------------------------------------------------------
# Exact oracles


def _check_compatible(mdp: Mdp, policy: "Policy") -> None:
    if policy.n_states != mdp.n_states or policy.n_actions != mdp.n_actions:
        raise ValueError(
            f"policy is {policy.n_states}x{policy.n_actions} but MDP is "
            f"{mdp.n_states}x{mdp.n_actions}")


def exact_value(mdp: Mdp, policy: "Policy", t: int | None = None) -> np.ndarray:
    """V^{(t)} over all states by the backward recursion (V^{(0)} = 0)."""
    _check_compatible(mdp, policy)
    t = mdp.horizon if t is None else t
    if t < 0:
        raise ValueError("horizon must be non-negative")
    pi = policy.prob_table()
    V = np.zeros(mdp.n_states)
    for _ in range(t):
        Q = mdp.reward + mdp.gamma * mdp.transition @ V
        V = np.sum(pi * Q, axis=1)
    return V


def value_gradient_dp(mdp: Mdp, policy: "Policy", t: int | None = None) -> np.ndarray:
    """Forward-mode derivative of the backward recursion, shape (S, d).

    Independent of trajectory enumeration; used to cross-check the policy
    gradient theorem.
    """
    _check_compatible(mdp, policy)
    t = mdp.horizon if t is None else t
    pi = policy.prob_table()
    dpi = np.stack([policy.grad_probs(s) for s in range(mdp.n_states)])  # (S, A, d)
    V = np.zeros(mdp.n_states)
    dV = np.zeros((mdp.n_states, policy.n_params))
    for _ in range(t):
        Q = mdp.reward + mdp.gamma * mdp.transition @ V
        dQ = mdp.gamma * np.einsum("sat,td->sad", mdp.transition, dV)
        dV = np.einsum("sad,sa->sd", dpi, Q) + np.einsum("sa,sad->sd", pi, dQ)
        V = np.sum(pi * Q, axis=1)
    return dV


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[tuple[int, int, float], ...]
    log_prob: float
    return_value: float
    final_state: int


@dataclass(frozen=True)
class TrajectoryTable:
    """All trajectories with non-zero probability, as parallel arrays.

    ``grad_probs`` holds the gradient of P_theta(tau) accumulated by the
    product rule, which equals P_theta(tau) * sum_t grad log pi(a_t|s_t)
    without dividing by pi.
    """

    states: np.ndarray  # (n, T+1)
    actions: np.ndarray  # (n, T)
    probs: np.ndarray  # (n,)
    returns: np.ndarray  # (n,)
    grad_probs: np.ndarray | None = None  # (n, d)

    def __len__(self) -> int:
        return len(self.probs)

    def trajectory(self, i: int, mdp: Mdp) -> Trajectory:
        steps = tuple((int(s), int(a), float(mdp.reward[s, a]))
                      for s, a in zip(self.states[i, :-1], self.actions[i]))
        return Trajectory(steps, _safe_log(self.probs[i]), float(self.returns[i]),
                          int(self.states[i, -1]))


def _safe_log(p: float) -> float:
    if p < LOG_PROB_FLOOR:
        raise DegenerateProbabilityError(f"trajectory probability {p!r} below {LOG_PROB_FLOOR}")
    return math.log(p)


def enumeration_size(mdp: Mdp) -> int:
    return (mdp.n_states * mdp.n_actions) ** mdp.horizon


def enumerate_trajectories(mdp: Mdp, policy: "Policy", with_gradients: bool = False,
                           cap: int = ENUMERATION_CAP) -> TrajectoryTable:
    """Breadth-first expansion of every trajectory with P_theta(tau) > 0."""
    _check_compatible(mdp, policy)
    if enumeration_size(mdp) > cap:
        raise EnumerationCapError(
            f"(|S||A|)^T = {enumeration_size(mdp)} exceeds enumeration cap {cap}")
    S, A, T = mdp.n_states, mdp.n_actions, mdp.horizon
    pi = policy.prob_table()
    states = np.full((1, 1), mdp.start_state, dtype=np.int64)
    actions = np.zeros((1, 0), dtype=np.int64)
    probs = np.ones(1)
    rets = np.zeros(1)
    if with_gradients:
        dpi = np.stack([policy.grad_probs(s) for s in range(S)])  # (S, A, d)
        grads = np.zeros((1, policy.n_params))
    for t in range(T):
        s = states[:, -1]
        # branch over (a, s')
        w = pi[s][:, :, None] * mdp.transition[s]  # (n, A, S)
        n_idx, a_idx, s_idx = np.nonzero(w)
        new_probs = probs[n_idx] * w[n_idx, a_idx, s_idx]
        if with_gradients:
            env = mdp.transition[s[n_idx], a_idx, s_idx]
            grads = (grads[n_idx] * w[n_idx, a_idx, s_idx][:, None]
                     + (probs[n_idx] * env)[:, None] * dpi[s[n_idx], a_idx])
        rets = rets[n_idx] + mdp.gamma ** t * mdp.reward[s[n_idx], a_idx]
        actions = np.concatenate([actions[n_idx], a_idx[:, None]], axis=1)
        states = np.concatenate([states[n_idx], s_idx[:, None]], axis=1)
        probs = new_probs
    return TrajectoryTable(states, actions, probs, rets, grads if with_gradients else None)


def exact_policy_gradient(mdp: Mdp, policy: "Policy", cap: int = ENUMERATION_CAP) -> np.ndarray:
    """grad V(s0) = sum_tau grad P_theta(tau) R(tau), by exhaustive enumeration."""
    table = enumerate_trajectories(mdp, policy, with_gradients=True, cap=cap)
    return table.grad_probs.T @ table.returns


# ---------------------------------------------------------------------------
# Sampling


def as_generator(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of ``probs`` (n, k) by inverse-CDF."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    return np.minimum((cdf <= u[:, None]).sum(axis=1), probs.shape[1] - 1)


@dataclass(frozen=True)
class EpisodeBatch:
    states: np.ndarray  # (n, T+1)
    actions: np.ndarray  # (n, T)
    rewards: np.ndarray  # (n, T)

    def returns(self, gamma: float) -> np.ndarray:
        T = self.rewards.shape[1]
        return self.rewards @ (gamma ** np.arange(T))


def sample_episodes(mdp: Mdp, policy: "Policy", n: int, seed) -> EpisodeBatch:
    """Draw ``n`` independent length-T episodes (vectorised over episodes)."""
    _check_compatible(mdp, policy)
    rng = as_generator(seed)
    pi = policy.prob_table()
    T = mdp.horizon
    states = np.empty((n, T + 1), dtype=np.int64)
    actions = np.empty((n, T), dtype=np.int64)
    rewards = np.empty((n, T))
    states[:, 0] = mdp.start_state
    for t in range(T):
        s = states[:, t]
        a = _categorical(rng, pi[s])
        actions[:, t] = a
        rewards[:, t] = mdp.reward[s, a]
        states[:, t + 1] = _categorical(rng, mdp.transition[s, a])
    return EpisodeBatch(states, actions, rewards)


def sample_trajectory(mdp: Mdp, policy: "Policy", rng_seed) -> Trajectory:
    batch = sample_episodes(mdp, policy, 1, rng_seed)
    pi = policy.prob_table()
    steps, logp = [], 0.0
    for t in range(mdp.horizon):
        s, a, s_next = batch.states[0, t], batch.actions[0, t], batch.states[0, t + 1]
        steps.append((int(s), int(a), float(batch.rewards[0, t])))
        logp += _safe_log(pi[s, a] * mdp.transition[s, a, s_next])
    return Trajectory(tuple(steps), logp, float(batch.returns(mdp.gamma)[0]),
                      int(batch.states[0, -1]))
