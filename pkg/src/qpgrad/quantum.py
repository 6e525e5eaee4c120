"""Toy-scale quantum gradient estimators and closed-form query-cost models.

Two executable estimators:

* ``jordan_gradient``: phase-grid gradient estimation. A uniform superposition
  over a grid of parameter offsets picks up the phase
  2 pi S sum_l a_l h(theta0 + l x), where h is the shifted, normalised value
  read from the probability oracle; an inverse QFT then concentrates on the
  label nearest to the scaled gradient.
* ``quantum_analytical_gradient_toy``: per-coordinate amplitude estimation of
  the REINFORCE payoff, encoded in an ancilla amplitude over the trajectory
  superposition.

Costs are counted in probability-oracle calls. One call prepares the
trajectory superposition once, so it is charged as one episode.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .classical import (GradReport, central_difference_coefficients, payoff_bound,
                        stencil_order)
from .mdp import Mdp, as_generator, return_scale
from .policies import DegenerateSupportError, Policy
from .qsim import (DEFAULT_BITS, FixedPointReturn, QRegisterSim, _replace,
                   apply_return_unitary, build_trajectory_superposition, normalized_shift,
                   phase_oracle_cost, return_format, shifted_value_enumerated)

MAX_GRID_POINTS = 2 ** 16
PHASE_ERROR_BUDGET = 1 / 8  # radians of systematic phase error tolerated per grid point


# ---------------------------------------------------------------------------
# Grid


@dataclass(frozen=True)
class GridSpec:
    d_active: int
    bits_per_param: int
    box_edge: float
    ladder_m: int = 1

    def __post_init__(self):
        if self.d_active not in (1, 2):
            raise ValueError("d_active must be 1 or 2")
        if self.bits_per_param < 1:
            raise ValueError("need at least one bit per parameter")
        if (2 ** self.bits_per_param) ** self.d_active > MAX_GRID_POINTS:
            raise ValueError(f"grid exceeds {MAX_GRID_POINTS} points")
        if self.box_edge <= 0:
            raise ValueError("box_edge must be positive")
        if self.ladder_m < 1:
            raise ValueError("ladder_m must be at least 1")

    @property
    def N(self) -> int:
        return 2 ** self.bits_per_param

    def offsets(self) -> np.ndarray:
        """Grid vectors x_j = edge (j / N - 1/2), shape (N^d, d), C order over j."""
        axis = self.box_edge * (np.arange(self.N) / self.N - 0.5)
        mesh = np.meshgrid(*([axis] * self.d_active), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)


def signed_label(y: np.ndarray, N: int) -> np.ndarray:
    y = np.asarray(y)
    return np.where(y < N // 2, y, y - N)


@dataclass(frozen=True)
class JordanResult:
    """Readout distribution over signed labels for each active coordinate."""

    probs: np.ndarray  # shape (N,) * d_active, indexed by unsigned label
    window: float  # gradient window: labels map to y * window / N
    grid: GridSpec

    @property
    def resolution(self) -> float:
        return self.window / self.grid.N

    def label_to_gradient(self, y) -> np.ndarray:
        return signed_label(np.asarray(y), self.grid.N) * self.resolution

    def most_probable(self) -> np.ndarray:
        y = np.unravel_index(int(np.argmax(self.probs)), self.probs.shape)
        return self.label_to_gradient(np.array(y))

    def sample(self, rng, n: int = 1) -> np.ndarray:
        rng = as_generator(rng)
        flat = self.probs.ravel()
        idx = rng.choice(flat.size, size=n, p=flat / flat.sum())
        ys = np.stack(np.unravel_index(idx, self.probs.shape), axis=1)
        return self.label_to_gradient(ys)

    def success_probability(self, target, tol: float) -> float:
        """Mass on labels whose gradient lies within tol (l_inf) of target."""
        axes = [self.label_to_gradient(np.arange(self.grid.N))] * self.grid.d_active
        mesh = np.meshgrid(*axes, indexing="ij")
        err = np.max(np.abs(np.stack(mesh) - np.reshape(target, (-1,) + (1,) * len(mesh))),
                     axis=0)
        return float(self.probs[err <= tol].sum())


def jordan_distribution(f_batch: Callable[[np.ndarray], np.ndarray], theta0, grid: GridSpec,
                        window: float, coefficients: Sequence[float] | None = None
                        ) -> JordanResult:
    """Readout distribution of the phase-grid algorithm for a scalar function f.

    ``f_batch`` maps points of shape (B, d_active) to values (B,). ``window``
    bounds the gradient: components must lie in [-window/2, window/2).
    """
    theta0 = np.asarray(theta0, dtype=float)
    if theta0.shape != (grid.d_active,):
        raise ValueError("theta0 must have d_active coordinates")
    if coefficients is None:
        coefficients = central_difference_coefficients(grid.ladder_m)
    coefficients = np.asarray(coefficients, dtype=float)
    m = (len(coefficients) - 1) // 2
    N = grid.N
    S = N / (grid.box_edge * window)
    x = grid.offsets()
    phase = np.zeros(len(x))
    for l, a in zip(range(-m, m + 1), coefficients):
        if a != 0:
            phase += a * np.asarray(f_batch(theta0 + l * x), dtype=float)
    psi = np.exp(2j * np.pi * S * phase).reshape((N,) * grid.d_active) / math.sqrt(len(x))
    out = np.fft.fftn(psi, norm="ortho")
    return JordanResult(np.abs(out) ** 2, window, grid)


# ---------------------------------------------------------------------------
# Planning on an MDP


def gradient_bound(mdp: Mdp, D: float = 1.0) -> float:
    """|d_i V| <= T D max|R(tau)|."""
    return mdp.horizon * D * return_scale(mdp)


@dataclass(frozen=True)
class JordanPlan:
    grid: GridSpec
    window: float  # on the value gradient
    scale: float  # value normalisation, V = (2 h - 1) scale
    eps_phase: float
    coefficients: np.ndarray = field(repr=False)

    @property
    def phase_window(self) -> float:
        return self.window / (2 * self.scale)

    @property
    def S(self) -> float:
        return self.grid.N / (self.grid.box_edge * self.phase_window)

    @property
    def resolution(self) -> float:
        return self.window / self.grid.N

    def phase_repetitions(self) -> int:
        """Phase-oracle calls needed to realise every weighted ladder phase."""
        return int(sum(math.ceil(2 * math.pi * self.S * abs(a))
                       for a in self.coefficients if a != 0))

    def episodes(self) -> int:
        return self.phase_repetitions() * phase_oracle_cost(self.eps_phase)


def _stencil_remainder_constant(coefficients: np.ndarray) -> float:
    m = (len(coefficients) - 1) // 2
    order = 2 * m + 1
    return sum(abs(a) * abs(l) ** order for l, a in zip(range(-m, m + 1), coefficients)
               ) / math.factorial(order)


def plan_box_edge(mdp: Mdp, d_active: int, N: int, phase_window: float,
                  coefficients: np.ndarray, D: float = 1.0) -> float:
    """Largest edge whose stencil remainder costs at most PHASE_ERROR_BUDGET radians.

    Heuristic: order-k directional derivatives of h are bounded by
    (d_active T D r)^k / 2 at grid radius r.
    """
    m = (len(coefficients) - 1) // 2
    K = _stencil_remainder_constant(coefficients) * (d_active * mdp.horizon * D) ** (2 * m + 1) / 2
    rhs = PHASE_ERROR_BUDGET * phase_window * 2 ** (2 * m + 1) / (2 * math.pi * N * K)
    return rhs ** (1 / (2 * m))


def plan_grid(mdp: Mdp, eps: float, d_active: int = 1, D: float = 1.0,
              box_edge: float | None = None, ladder_m: int | None = None) -> JordanPlan:
    if mdp.gamma * mdp.horizon < 2:
        raise ValueError(f"precondition gamma*T >= 2 violated (gamma*T = {mdp.gamma * mdp.horizon})")
    if mdp.gamma >= 1:
        raise ValueError("phase-grid estimation needs gamma < 1")
    scale = return_scale(mdp)
    window = 2 * gradient_bound(mdp, D)
    bits = max(1, math.ceil(math.log2(window / eps) - 1e-12))
    if ladder_m is None:
        ladder_m = stencil_order(eps, mdp.r_max, mdp.gamma) // 2
    coefficients = central_difference_coefficients(ladder_m)
    N = 2 ** bits
    phase_window = window / (2 * scale)
    if box_edge is None:
        box_edge = plan_box_edge(mdp, d_active, N, phase_window, coefficients, D)
    grid = GridSpec(d_active, bits, box_edge, ladder_m)
    S = N / (box_edge * phase_window)
    eps_phase = PHASE_ERROR_BUDGET / (2 * math.pi * S * np.abs(coefficients).sum())
    return JordanPlan(grid, window, scale, min(eps_phase, 0.5), coefficients)


def shifted_value_batch(mdp: Mdp, policy: Policy, theta0: np.ndarray, active: Sequence[int],
                        bits: int = DEFAULT_BITS) -> Callable[[np.ndarray], np.ndarray]:
    """h(points) for points in the active coordinates, others held at theta0."""
    def f(points):
        out = np.empty(len(points))
        for b, p in enumerate(points):
            theta = theta0.copy()
            theta[list(active)] = p
            out[b] = shifted_value_enumerated(mdp, policy.with_theta(theta), bits)
        return out
    return f


def jordan_mdp_distribution(mdp: Mdp, policy: Policy, plan: JordanPlan,
                            active: Sequence[int] | None = None,
                            bits: int = DEFAULT_BITS) -> JordanResult:
    active = list(range(plan.grid.d_active)) if active is None else list(active)
    if len(active) != plan.grid.d_active:
        raise ValueError("need one active coordinate per grid dimension")
    theta0 = policy.theta
    f = shifted_value_batch(mdp, policy, theta0, active, bits)
    res = jordan_distribution(f, theta0[active], plan.grid, plan.phase_window, plan.coefficients)
    # labels map onto the h-gradient; rescale the window to the value gradient
    return JordanResult(res.probs, plan.window, plan.grid)


def jordan_gradient(mdp: Mdp, policy: Policy, grid: GridSpec | None = None, eps: float = 0.1,
                    seed=0, active: Sequence[int] | None = None, D: float = 1.0,
                    exact: np.ndarray | None = None,
                    distribution: JordanResult | None = None) -> GradReport:
    """One seeded readout of the phase-grid gradient estimator.

    ``grid=None`` plans the grid for ``eps``. A precomputed ``distribution``
    may be passed to draw many readouts from a single simulation.
    """
    plan = plan_grid(mdp, eps, 1 if grid is None else grid.d_active, D)
    if grid is not None:
        plan = JordanPlan(grid, plan.window, plan.scale, plan.eps_phase,
                          central_difference_coefficients(grid.ladder_m))
    if plan.resolution > eps * (1 + 1e-12):
        raise ValueError(f"grid resolution {plan.resolution:.4g} coarser than eps={eps}")
    active = list(range(plan.grid.d_active)) if active is None else list(active)
    if distribution is None:
        distribution = jordan_mdp_distribution(mdp, policy, plan, active)
    est = distribution.sample(seed)[0]
    episodes = plan.episodes()
    report = GradReport("quantum_numerical", est, eps, 1 / 3, episodes,
                        {"P": episodes * mdp.horizon, "Pi": episodes * mdp.horizon,
                         "R": 2 * episodes * mdp.horizon},
                        extra={"active": active, "resolution": plan.resolution,
                               "bits": plan.grid.bits_per_param,
                               "box_edge": plan.grid.box_edge, "m": plan.grid.ladder_m,
                               "eps_phase": plan.eps_phase})
    if exact is not None:
        report.score(np.asarray(exact)[active])
    return report


# ---------------------------------------------------------------------------
# Amplitude estimation


AE_SUCCESS = 8 / math.pi ** 2


def ae_evaluation_size(eps: float) -> int:
    """Smallest power of two M with pi/M + pi^2/M^2 <= eps."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    M = 1
    while math.pi / M + math.pi ** 2 / M ** 2 > eps:
        M *= 2
    return M


def ae_repetitions(delta: float) -> int:
    """Odd repetition count for the median to fail with probability <= delta."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    n = math.ceil(math.log(1 / delta) / (2 * (AE_SUCCESS - 0.5) ** 2))
    return n if n % 2 else n + 1


def ae_outcome_distribution(amplitude: float, M: int) -> np.ndarray:
    """Phase-estimation outcome probabilities on the 2D Grover plane.

    A|0> = cos(t)|bad> + sin(t)|good> with sin^2(t) = amplitude; Q rotates
    the plane by 2t. The counting register holds sum_j |j> Q^j A|0>.
    """
    t = math.asin(math.sqrt(amplitude))
    Q = np.array([[math.cos(2 * t), -math.sin(2 * t)], [math.sin(2 * t), math.cos(2 * t)]])
    states = np.empty((M, 2))
    states[0] = [math.cos(t), math.sin(t)]
    for j in range(1, M):
        states[j] = Q @ states[j - 1]
    out = np.fft.fft(states / math.sqrt(M), axis=0, norm="ortho")
    probs = (np.abs(out) ** 2).sum(axis=1)
    return probs / probs.sum()


@dataclass(frozen=True)
class AeResult:
    estimate: float
    cost: int
    M: int
    repetitions: int


def amplitude_estimation_mean(amplitude: float, eps: float, delta: float, seed=0) -> AeResult:
    """Median of repeated phase-estimation amplitude estimates.

    Cost counts calls to the state-preparation oracle: 2M - 1 per run.
    """
    if not -1e-12 <= amplitude <= 1 + 1e-12:
        raise ValueError(f"payoff amplitude {amplitude!r} outside [0, 1]")
    amplitude = min(1.0, max(0.0, amplitude))
    M = ae_evaluation_size(eps)
    reps = ae_repetitions(delta)
    rng = as_generator(seed)
    probs = ae_outcome_distribution(amplitude, M)
    ys = rng.choice(M, size=reps, p=probs)
    est = float(np.median(np.sin(np.pi * ys / M) ** 2))
    return AeResult(est, reps * (2 * M - 1), M, reps)


def analytical_payoff_amplitudes(mdp: Mdp, policy: Policy, bits: int = DEFAULT_BITS
                                 ) -> tuple[np.ndarray, float, dict[str, int]]:
    """Ancilla-|0> probabilities a_j = E[(X_j / B + 1) / 2] from the register simulation.

    Returns (a, B, oracle counts of one state preparation).
    """
    B = payoff_bound(mdp, policy, np.inf)
    d = policy.n_params
    if B == 0:
        return np.full(d, 0.5), 0.0, {}
    lg = policy.log_grad_table()
    gf = return_format(mdp, bits)
    xf = FixedPointReturn(bits, B)
    out = np.empty(d)
    counts: dict[str, int] = {}
    for j in range(d):
        sim = QRegisterSim()
        build_trajectory_superposition(sim, mdp, policy)
        apply_return_unitary(sim, mdp, bits=bits)
        s_idx = [sim.index(f"s{t}") for t in range(mdp.horizon)]
        a_idx = [sim.index(f"a{t}") for t in range(mdp.horizon)]
        k = sim.index("ret")
        sim.add_register("x", xf.dim)
        xi = sim.index("x")

        def payoff(lab, j=j):
            g = sum(lg[lab[s], lab[a], j] for s, a in zip(s_idx, a_idx))
            if np.isnan(g):
                raise DegenerateSupportError("trajectory branch with pi below PI_MIN")
            yield _replace(lab, xi, xf.encode(g * gf.decode(lab[k]))), 1.0
        sim.apply(payoff)
        sim.add_register("anc", 2)
        anc = sim.index("anc")

        def rotate(lab):
            r = normalized_shift(xf.decode(lab[xi]), B)
            yield _replace(lab, anc, 0), math.sqrt(r)
            yield _replace(lab, anc, 1), math.sqrt(1 - r)
        sim.apply(rotate)
        out[j] = sim.probability("anc", 0)
        counts = sim.counter_dump()
    return out, B, counts


def quantum_analytical_gradient_toy(mdp: Mdp, policy: Policy, eps: float, delta: float,
                                    seed=0, bits: int = DEFAULT_BITS,
                                    exact: np.ndarray | None = None,
                                    amplitudes: tuple | None = None) -> GradReport:
    """Per-coordinate amplitude estimation of E[X_j] with a union bound over coordinates."""
    d = policy.n_params
    if d > 4:
        raise ValueError("toy analytical estimator supports d <= 4")
    a, B, _ = analytical_payoff_amplitudes(mdp, policy, bits) if amplitudes is None else amplitudes
    rng = as_generator(seed)
    est = np.zeros(d)
    episodes = 0
    if B > 0:
        for j in range(d):
            res = amplitude_estimation_mean(a[j], eps / (2 * B), delta / d, rng)
            est[j] = B * (2 * res.estimate - 1)
            episodes += res.cost
    report = GradReport("quantum_analytical", est, eps, delta, episodes,
                        {"P": episodes * mdp.horizon, "Pi": episodes * mdp.horizon,
                         "R": 2 * episodes * mdp.horizon}, extra={"B": B})
    return report.score(exact) if exact is not None else report


# ---------------------------------------------------------------------------
# Closed-form query costs

FAMILIES = ("quantum-numerical", "classical-numerical", "quantum-analytical",
            "classical-analytical")
COST_COLUMNS = ("family", "d", "smoothness", "T", "gamma", "eps", "episode_units",
                "P_calls", "R_calls")


def xi(p: float) -> float:
    if p < 1:
        raise ValueError("p must be at least 1")
    return max(0.0, 0.5 - 1.0 / p)


@dataclass(frozen=True)
class CostModel:
    family: str
    d: int
    smoothness: float
    T: int
    r_max: float
    gamma: float
    eps: float
    p: float | None
    episode_units: float

    @property
    def P_calls(self) -> float:
        return self.episode_units * self.T

    @property
    def R_calls(self) -> float:
        return self.episode_units * self.T

    def to_row(self) -> dict:
        return {"family": self.family, "d": self.d, "smoothness": repr(self.smoothness),
                "T": self.T, "gamma": repr(self.gamma), "eps": repr(self.eps),
                "episode_units": repr(self.episode_units), "P_calls": repr(self.P_calls),
                "R_calls": repr(self.R_calls)}


def query_cost(family: str, d: int, T: int, r_max: float, gamma: float, eps: float,
               D: float | None = None, B: float | None = None, p: float = 1.0) -> CostModel:
    """Episode units of the four estimator families, all hidden constants set to 1.

    Numerical families take the smoothness D, analytical ones B_p.
    """
    if min(d, T, r_max, eps) <= 0 or not 0 <= gamma < 1:
        raise ValueError("need positive d, T, r_max, eps and gamma in [0, 1)")
    scale = r_max / (eps * (1 - gamma))
    if family in ("quantum-numerical", "classical-numerical"):
        if D is None or D <= 0:
            raise ValueError("numerical families need D > 0")
        base = D * T * T * scale
        units = math.sqrt(d) * base if family.startswith("quantum") else d * base ** 2
        return CostModel(family, d, D, T, r_max, gamma, eps, None, units)
    if family in ("quantum-analytical", "classical-analytical"):
        if B is None or B <= 0:
            raise ValueError("analytical families need B_p > 0")
        base = B * T * scale
        units = d ** xi(p) * base if family.startswith("quantum") else base ** 2
        return CostModel(family, d, B, T, r_max, gamma, eps, p, units)
    raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")


def costs_to_csv(models: Sequence[CostModel]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=COST_COLUMNS, lineterminator="\n")
    w.writeheader()
    w.writerows(m.to_row() for m in models)
    return buf.getvalue()


def loglog_slope(eps_values: Sequence[float], costs: Sequence[float]) -> float:
    """Least-squares slope of log(cost) against log(1/eps)."""
    x = np.log(1 / np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(costs, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
