"""Classical gradient estimators: Monte Carlo values, REINFORCE, Hoeffding-planned
multivariate means and the high-order central-difference pipeline.

Every estimator plans its episode budget up front and reports exactly that
many episodes in its ``GradReport``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .mdp import (Mdp, as_generator, enumerate_trajectories, exact_policy_gradient,
                  return_scale, sample_episodes)
from .policies import DegenerateSupportError, Policy

# above this many episodes Monte Carlo draws the trajectory histogram directly
HISTOGRAM_THRESHOLD = 200_000
EPISODE_CHUNK = 100_000

REPORT_COLUMNS = ("estimator", "rep", "seed", "d", "eps", "delta", "episodes",
                  "p_calls", "r_calls", "linf_error", "estimate")


@dataclass
class GradReport:
    estimator: str
    estimate: np.ndarray
    target_eps: float
    target_delta: float
    episodes_used: int
    oracle_calls: dict[str, int] = field(default_factory=dict)
    realized_linf_error: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return len(self.estimate)

    def score(self, exact: np.ndarray) -> "GradReport":
        self.realized_linf_error = float(np.max(np.abs(self.estimate - exact)))
        return self

    def to_row(self, rep: int = 0, seed=None) -> dict:
        err = self.realized_linf_error
        return {
            "estimator": self.estimator,
            "rep": rep,
            "seed": "" if seed is None else seed,
            "d": self.d,
            "eps": repr(float(self.target_eps)),
            "delta": repr(float(self.target_delta)),
            "episodes": self.episodes_used,
            "p_calls": self.oracle_calls.get("P", 0),
            "r_calls": self.oracle_calls.get("R", 0),
            "linf_error": "" if err is None else repr(err),
            "estimate": " ".join(repr(float(x)) for x in self.estimate),
        }


def reports_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def episode_calls(mdp: Mdp, episodes: int) -> dict[str, int]:
    """One length-T episode samples P and evaluates R once per step."""
    return {"P": episodes * mdp.horizon, "R": episodes * mdp.horizon}


# ---------------------------------------------------------------------------
# Monte Carlo value


def mc_value_estimate(mdp: Mdp, policy: Policy, n_episodes: int, seed,
                      method: str = "auto") -> float:
    """Mean discounted return over ``n_episodes`` episodes.

    ``method="histogram"`` draws the multinomial counts of whole trajectories,
    which has exactly the distribution of ``n_episodes`` i.i.d. episodes and
    keeps very large budgets tractable.
    """
    if n_episodes < 1:
        raise ValueError("need at least one episode")
    rng = as_generator(seed)
    if method == "auto":
        method = "histogram" if n_episodes > HISTOGRAM_THRESHOLD else "episodes"
    if method == "histogram":
        table = enumerate_trajectories(mdp, policy)
        p = table.probs / table.probs.sum()
        counts = rng.multinomial(n_episodes, p)
        return float(counts @ table.returns / n_episodes)
    if method != "episodes":
        raise ValueError(f"unknown sampling method {method!r}")
    total, left = 0.0, n_episodes
    while left:
        n = min(left, EPISODE_CHUNK)
        total += sample_episodes(mdp, policy, n, rng).returns(mdp.gamma).sum()
        left -= n
    return total / n_episodes


# ---------------------------------------------------------------------------
# Hoeffding multivariate mean


def hoeffding_sample_count(B: float, eps: float, delta: float, d: int = 1) -> int:
    if B <= 0 or eps <= 0 or not 0 < delta < 1 or d < 1:
        raise ValueError("need B, eps > 0, delta in (0, 1), d >= 1")
    return math.ceil(2 * B * B / (eps * eps) * math.log(2 * d / delta))


class BoundViolationError(ValueError):
    """A sampler emitted a coordinate outside its declared bound."""


def classical_mean_estimate(sampler: Callable[[np.random.Generator, int], np.ndarray],
                            B: float, eps: float, delta: float, d: int, seed
                            ) -> tuple[np.ndarray, int]:
    """Coordinate-wise mean of N = hoeffding_sample_count(B, eps, delta, d) samples.

    ``sampler(rng, n)`` returns an (n, d) array with entries in [-B, B].
    """
    rng = as_generator(seed)
    N = hoeffding_sample_count(B, eps, delta, d)
    x = np.asarray(sampler(rng, N), dtype=float).reshape(N, d)
    if np.any(np.abs(x) > B * (1 + 1e-12)):
        raise BoundViolationError(f"sample with |x| = {np.abs(x).max()} exceeds B = {B}")
    return x.mean(axis=0), N


# ---------------------------------------------------------------------------
# REINFORCE


def reinforce_payoff(mdp: Mdp, policy: Policy, states: np.ndarray, actions: np.ndarray,
                     returns: np.ndarray, log_grads: np.ndarray | None = None) -> np.ndarray:
    """X(tau) = sum_t grad log pi(a_t|s_t) * R(tau) for a batch of trajectories."""
    if log_grads is None:
        log_grads = policy.log_grad_table()
    g = log_grads[states[:, :-1], actions].sum(axis=1)  # (n, d)
    if np.isnan(g).any():
        raise DegenerateSupportError("sampled an action whose probability is below PI_MIN")
    return g * returns[:, None]


def reinforce_expectation(mdp: Mdp, policy: Policy) -> np.ndarray:
    """E[X(tau)] weighted by P_theta(tau) over the full trajectory enumeration."""
    table = enumerate_trajectories(mdp, policy)
    X = reinforce_payoff(mdp, policy, table.states, table.actions, table.returns)
    return table.probs @ X


def log_grad_bound(policy: Policy, p: float = np.inf) -> float:
    """B_p at the current theta: max over (s, a) with pi > 0 of ||grad log pi||_p."""
    g = policy.log_grad_table()
    pi = policy.prob_table()
    norms = np.linalg.norm(np.nan_to_num(g), ord=p, axis=2)
    return float(norms[pi > 0].max()) if np.any(pi > 0) else 0.0


def payoff_bound(mdp: Mdp, policy: Policy, p: float = np.inf) -> float:
    """||X(tau)||_p <= T * B_p * max|R(tau)|, with max|R| = r_max * sum_t gamma^t."""
    return mdp.horizon * log_grad_bound(policy, p) * return_scale(mdp)


def plan_reinforce_episodes(mdp: Mdp, policy: Policy, eps: float, delta: float) -> int:
    B = payoff_bound(mdp, policy, np.inf)
    if B == 0:
        return 1
    return hoeffding_sample_count(B, eps, delta, policy.n_params)


def reinforce_gradient(mdp: Mdp, policy: Policy, n_episodes: int | None = None, seed=0,
                       eps: float = 0.1, delta: float = 0.1,
                       exact: np.ndarray | None = None) -> GradReport:
    """Empirical mean of X(tau) over sampled episodes.

    With ``n_episodes=None`` the budget is the Hoeffding count for the bound
    ||X||_inf <= T * B_inf * max|R|, which targets l_inf error eps w.p. 1 - delta.
    """
    N = plan_reinforce_episodes(mdp, policy, eps, delta) if n_episodes is None else n_episodes
    rng = as_generator(seed)
    log_grads = policy.log_grad_table()
    total, left = np.zeros(policy.n_params), N
    while left:
        n = min(left, EPISODE_CHUNK)
        batch = sample_episodes(mdp, policy, n, rng)
        total += reinforce_payoff(mdp, policy, batch.states, batch.actions,
                                  batch.returns(mdp.gamma), log_grads).sum(axis=0)
        left -= n
    report = GradReport("reinforce", total / N, eps, delta, N, episode_calls(mdp, N))
    return report.score(exact) if exact is not None else report


# ---------------------------------------------------------------------------
# Central differences


def central_difference_coefficients(m: int, exact: bool = False):
    """First-derivative weights a_l for l = -m..m (a_0 = 0)."""
    if m < 1:
        raise ValueError("m must be at least 1")
    f = math.factorial
    coeffs = [Fraction(0) if l == 0 else
              Fraction((-1) ** ((l + 1) % 2) * f(m) ** 2, l * f(m + l) * f(m - l))
              for l in range(-m, m + 1)]
    return coeffs if exact else np.array([float(c) for c in coeffs])


@dataclass(frozen=True)
class StencilPlan:
    k: int
    m: int
    C_k: float
    eps: float
    delta: float
    coefficients: np.ndarray

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(-self.m, self.m + 1)

    @property
    def delta_max(self) -> float:
        """Largest step with 2 m^k C_k delta^(k-1) / k! <= eps / 2."""
        k, m = self.k, self.m
        return (math.factorial(k) * self.eps / (4 * m ** k * self.C_k)) ** (1 / (k - 1))

    @property
    def delta_certified(self) -> float:
        return min(self.delta, self.delta_max)

    def remainder_bound(self, delta: float | None = None) -> float:
        h = self.delta if delta is None else delta
        return 2 * self.m ** self.k * self.C_k * h ** (self.k - 1) / math.factorial(self.k)


def stencil_order(eps: float, r_max: float, gamma: float) -> int:
    """k = ceil(log(2 r_max / (eps (1 - gamma)))), at least 2."""
    return max(2, math.ceil(math.log(2 * r_max / (eps * (1 - gamma)))))


def choose_stencil(eps: float, C_k: float, k: int) -> StencilPlan:
    if C_k <= 0 or k < 2 or eps <= 0:
        raise ValueError("need C_k > 0, k >= 2, eps > 0")
    # ceil((k - 1) / 2): the stencil must cancel every Taylor term below order k
    m = k // 2
    step = (2 / math.e) * (eps / (4 * C_k)) ** (1 / k)
    return StencilPlan(k, m, C_k, eps, step, central_difference_coefficients(m))


def value_derivative_bound(mdp: Mdp, D: float, k: int) -> float:
    """C_k = (2 r_max / (1 - gamma)) (D T^2)^k."""
    return 2 * mdp.r_max / (1 - mdp.gamma) * (D * mdp.horizon ** 2) ** k


@dataclass(frozen=True)
class NumericalPlan:
    stencil: StencilPlan
    step: float
    point_precision: dict[int, float]
    point_episodes: dict[int, int]
    d: int

    @property
    def episodes(self) -> int:
        return self.d * sum(self.point_episodes.values())


def plan_numerical_gradient(mdp: Mdp, d: int, eps: float, delta: float, D: float = 1.0,
                            k: int | None = None) -> NumericalPlan:
    if mdp.gamma >= 1.0:
        raise ValueError("numerical gradient needs gamma < 1")
    if mdp.gamma * mdp.horizon < 2:
        raise ValueError(f"precondition gamma*T >= 2 violated (gamma*T = {mdp.gamma * mdp.horizon})")
    k = stencil_order(eps, mdp.r_max, mdp.gamma) if k is None else k
    stencil = choose_stencil(eps, value_derivative_bound(mdp, D, k), k)
    h = stencil.delta_certified
    B = return_scale(mdp)
    n_points = 2 * stencil.m * d  # union bound over every estimated f(x + l h e_i)
    precision, counts = {}, {}
    for l, a in zip(stencil.offsets, stencil.coefficients):
        if a == 0:
            continue
        precision[int(l)] = eps * h / (abs(a) * 2 * stencil.k)
        counts[int(l)] = hoeffding_sample_count(B, precision[int(l)], delta / n_points)
    return NumericalPlan(stencil, h, precision, counts, d)


def numerical_gradient_classical(mdp: Mdp, policy: Policy, eps: float, delta: float, seed=0,
                                 D: float = 1.0, k: int | None = None,
                                 exact: np.ndarray | None = None,
                                 method: str = "auto") -> GradReport:
    """Central-difference gradient from Monte Carlo values at shifted parameters."""
    plan = plan_numerical_gradient(mdp, policy.n_params, eps, delta, D, k)
    rng = as_generator(seed)
    theta = policy.theta
    est = np.zeros(policy.n_params)
    for i in range(policy.n_params):
        for l, a in zip(plan.stencil.offsets, plan.stencil.coefficients):
            if a == 0:
                continue
            shifted = theta.copy()
            shifted[i] += l * plan.step
            v = mc_value_estimate(mdp, policy.with_theta(shifted), plan.point_episodes[int(l)],
                                  rng, method)
            est[i] += a * v / plan.step
    report = GradReport("classical_numerical", est, eps, delta, plan.episodes,
                        episode_calls(mdp, plan.episodes),
                        extra={"k": plan.stencil.k, "m": plan.stencil.m, "step": plan.step})
    return report.score(exact) if exact is not None else report


def exact_gradient_report(mdp: Mdp, policy: Policy) -> GradReport:
    g = exact_policy_gradient(mdp, policy)
    return GradReport("exact", g, 0.0, 0.0, 0, {}).score(g)

