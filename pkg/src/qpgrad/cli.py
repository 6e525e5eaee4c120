"""Command-line experiment driver.

Exit codes: 0 success, 1 input error, 2 verification failure, 3 divergence.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from . import asset_path, classical, mdp as mdp_mod, policies, qsim, quantum, smoothness
from .classical import GradReport, reports_to_csv
from .mdp import Mdp, exact_policy_gradient, exact_value, load_mdp, validate_mdp
from .policies import Policy, load_policy

EXIT_OK, EXIT_INPUT, EXIT_VERIFY, EXIT_DIVERGED = 0, 1, 2, 3
ESTIMATORS = ("exact", "reinforce", "classical_numerical", "quantum_numerical",
              "quantum_analytical")
TRAIN_COLUMNS = ("iteration", "value", "grad_linf")


class InputError(Exception):
    def __init__(self, code: str, detail: str):
        super().__init__(detail)
        self.code, self.detail = code, detail

    def record(self) -> dict:
        return {"error": self.code, "detail": self.detail}


def resolve_path(path: str | None, base: Path | None = None) -> Path:
    """``asset:NAME`` refers to a bundled fixture; relative paths are taken from ``base``."""
    if path is None:
        raise InputError("missing-input", "no path given")
    if path.startswith("asset:"):
        p = asset_path(path[len("asset:"):])
    else:
        p = Path(path)
        if base is not None and not p.is_absolute():
            p = base / p
    if not p.exists():
        raise InputError("missing-input", f"file not found: {path}")
    return p


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class TrainingConfig:
    step_size: float = 0.5
    iterations: int = 50
    estimator: str = "exact"
    episodes: int | None = None


@dataclass
class ExperimentConfig:
    mdp: str
    policy: str
    seed: int
    estimator: str = "reinforce"
    eps: float = 0.1
    delta: float = 0.1
    repetitions: int = 1
    episodes: int | None = None
    active: list[int] = field(default_factory=lambda: [0])
    output: str = "results.csv"
    training: TrainingConfig | None = None
    base_dir: str | None = None

    def __post_init__(self):
        if self.seed is None:
            raise InputError("invalid-config", "seed is mandatory")
        if self.estimator not in ESTIMATORS:
            raise InputError("invalid-config", f"unknown estimator {self.estimator!r}")
        if isinstance(self.training, dict):
            self.training = TrainingConfig(**self.training)

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | None = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InputError("invalid-config", f"unknown config keys {sorted(unknown)}")
        if "seed" not in data:
            raise InputError("invalid-config", "seed is mandatory")
        return cls(**{**data, "base_dir": data.get("base_dir", base_dir)})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = resolve_path(str(path))
        try:
            data = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise InputError("invalid-config", f"{path}: {exc}") from exc
        return cls.from_dict(data, str(p.parent))

    def base(self) -> Path | None:
        return Path(self.base_dir) if self.base_dir else None

    def load_inputs(self) -> tuple[Mdp, Policy]:
        mdp_path = resolve_path(self.mdp, self.base())
        pol_path = resolve_path(self.policy, self.base())
        try:
            mdp = load_mdp(mdp_path)
            policy = load_policy(pol_path)
        except (ValueError, KeyError) as exc:
            raise InputError("invalid-input", str(exc)) from exc
        if (policy.n_states, policy.n_actions) != (mdp.n_states, mdp.n_actions):
            raise InputError("invalid-input", "policy and MDP dimensions differ")
        return mdp, policy

    def output_path(self) -> Path:
        p = Path(self.output)
        return p if p.is_absolute() or self.base() is None else self.base() / p


def summary_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".summary.json")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# Experiments


def _rep_generators(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def _make_estimator(cfg: ExperimentConfig, mdp: Mdp, policy: Policy, exact: np.ndarray
                    ) -> Callable[[np.random.Generator], GradReport]:
    e, d = cfg.estimator, cfg.delta
    if e == "exact":
        return lambda rng: classical.exact_gradient_report(mdp, policy)
    if e == "reinforce":
        return lambda rng: classical.reinforce_gradient(mdp, policy, cfg.episodes, rng,
                                                        cfg.eps, d, exact)
    if e == "classical_numerical":
        return lambda rng: classical.numerical_gradient_classical(mdp, policy, cfg.eps, d, rng,
                                                                  exact=exact)
    if e == "quantum_numerical":
        if len(cfg.active) > 2:
            raise InputError("invalid-config", "at most two active coordinates")
        plan = quantum.plan_grid(mdp, cfg.eps, len(cfg.active))
        dist = quantum.jordan_mdp_distribution(mdp, policy, plan, cfg.active)
        return lambda rng: quantum.jordan_gradient(mdp, policy, plan.grid, cfg.eps, rng,
                                                   cfg.active, exact=exact, distribution=dist)
    amps = quantum.analytical_payoff_amplitudes(mdp, policy)
    return lambda rng: quantum.quantum_analytical_gradient_toy(mdp, policy, cfg.eps, d, rng,
                                                               exact=exact, amplitudes=amps)


def run_experiment(cfg: ExperimentConfig, out=None) -> int:
    """Write one CSV row per repetition plus a JSON summary next to the CSV."""
    out = sys.stdout if out is None else out
    try:
        mdp, policy = cfg.load_inputs()
        exact = exact_policy_gradient(mdp, policy)
        estimate = _make_estimator(cfg, mdp, policy, exact)
        rows, errors = [], []
        for rep, rng in enumerate(_rep_generators(cfg.seed, cfg.repetitions)):
            report = estimate(rng)
            rows.append(report.to_row(rep, cfg.seed))
            errors.append(report.realized_linf_error)
    except InputError as exc:
        print(_dump_json(exc.record()), end="", file=out)
        return EXIT_INPUT
    except (ValueError, mdp_mod.EnumerationCapError) as exc:
        print(_dump_json({"error": "precondition", "detail": str(exc)}), end="", file=out)
        return EXIT_INPUT
    path = cfg.output_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(reports_to_csv(rows))
    errs = np.array(errors, dtype=float)
    summary = {
        "estimator": cfg.estimator,
        "repetitions": cfg.repetitions,
        "eps": cfg.eps,
        "delta": cfg.delta,
        "seed": cfg.seed,
        "exact_gradient": [float(x) for x in exact],
        "mean_linf_error": float(errs.mean()),
        "success_rate": float(np.mean(errs <= cfg.eps)),
        "target_success_rate": 1 - cfg.delta,
        "episodes_per_repetition": int(rows[0]["episodes"]),
    }
    summary_path(path).write_text(_dump_json(summary))
    print(_dump_json(summary), end="", file=out)
    return EXIT_OK


def run_training_demo(cfg: ExperimentConfig, out=None) -> int:
    """Gradient ascent theta <- theta + eta * estimate, logging the exact value each step."""
    out = sys.stdout if out is None else out
    tc = cfg.training or TrainingConfig()
    try:
        mdp, policy = cfg.load_inputs()
    except InputError as exc:
        print(_dump_json(exc.record()), end="", file=out)
        return EXIT_INPUT
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed))
    lines = [",".join(TRAIN_COLUMNS)]
    values = []
    s0 = mdp.start_state
    status = EXIT_OK
    for it in range(tc.iterations + 1):
        v = float(exact_value(mdp, policy)[s0])
        if it == tc.iterations:
            g = np.zeros(policy.n_params)
        elif tc.estimator == "exact":
            g = exact_policy_gradient(mdp, policy)
        elif tc.estimator == "reinforce":
            g = classical.reinforce_gradient(mdp, policy, tc.episodes, rng, cfg.eps,
                                             cfg.delta).estimate
        else:
            print(_dump_json({"error": "invalid-config",
                              "detail": f"training estimator {tc.estimator!r}"}), end="", file=out)
            return EXIT_INPUT
        values.append(v)
        lines.append(f"{it},{v!r},{float(np.max(np.abs(g))) if g.size else 0.0!r}")
        theta = policy.theta + tc.step_size * g
        if not (math.isfinite(v) and np.all(np.isfinite(theta))):
            status = EXIT_DIVERGED
            break
        if it < tc.iterations:
            policy = policy.with_theta(theta)
    path = cfg.output_path()
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")
    diffs = np.diff(values)
    summary = {
        "estimator": tc.estimator,
        "step_size": tc.step_size,
        "iterations": len(values) - 1,
        "initial_value": values[0],
        "final_value": values[-1],
        "nondecreasing_fraction": float(np.mean(diffs >= -1e-12)) if diffs.size else 1.0,
    }
    if status == EXIT_DIVERGED:
        summary["error"] = "divergence"
    summary_path(path).write_text(_dump_json(summary))
    print(_dump_json(summary), end="", file=out)
    return status


# ---------------------------------------------------------------------------
# Verification suite


@dataclass
class CheckResult:
    name: str
    anchor: str
    passed: bool
    detail: str


def _check_stencil() -> tuple[bool, str]:
    ok = True
    for m in range(1, 6):
        a = np.asarray(classical.central_difference_coefficients(m), dtype=float)
        l = np.arange(-m, m + 1)
        ok &= abs(a.sum()) < 1e-12 and abs((a * l).sum() - 1) < 1e-12
    golden = np.array([1 / 12, -2 / 3, 0, 2 / 3, -1 / 12])
    ok &= np.allclose(classical.central_difference_coefficients(2), golden, atol=1e-15)
    return bool(ok), "moments for m <= 5, 5-point golden"


def _check_counters() -> tuple[bool, str]:
    mdp = load_mdp(asset_path("chain2_long.json"))
    policy = load_policy(asset_path("raw_pqc_1param.json"))
    sim = qsim.QRegisterSim()
    qsim.build_trajectory_superposition(sim, mdp, policy)
    after_build = dict(sim.counters)
    qsim.apply_return_unitary(sim, mdp)
    T = mdp.horizon
    ok = (after_build.get("P") == T and after_build.get("Pi") == T
          and sim.counters["R"] == 2 * T)
    return ok, f"T={T}: {after_build} then R={sim.counters['R']}"


def _check_superposition() -> tuple[bool, str]:
    mdp = load_mdp(asset_path("three_state.json")).with_horizon(3)
    policy = policies.TabularSoftmaxPolicy(np.array([[0.2, -0.4], [1.0, 0.0], [-0.3, 0.5]]))
    sim = qsim.QRegisterSim()
    qsim.build_trajectory_superposition(sim, mdp, policy)
    names = [n for n, _ in sim.registers]
    probs = sim.probabilities_over(names)
    table = mdp_mod.enumerate_trajectories(mdp, policy)
    worst = 0.0
    for st, ac, p in zip(table.states, table.actions, table.probs):
        lab = tuple(int(x) for pair in zip(st[:-1], ac) for x in pair) + (int(st[-1]),)
        worst = max(worst, abs(probs.get(lab, 0.0) - p))
    ok = worst <= 1e-12 and len(probs) == len(table)
    _, p0 = qsim.probability_oracle_value(mdp, policy)
    v = exact_value(mdp, policy)[mdp.start_state]
    target = qsim.normalized_shift(v, mdp_mod.return_scale(mdp))
    ok &= abs(p0 - target) <= 2 ** -14
    return bool(ok), f"max |amp^2 - P(tau)| = {worst:.1e}, |p0 - shifted V| = {abs(p0 - target):.1e}"


def _check_unbiased() -> tuple[bool, str]:
    worst = 0.0
    for m_name, p_name in [("chain2.json", "tabular_softmax.json"), ("chain2.json", "raw_pqc.json"),
                           ("chain2.json", "softmax1.json")]:
        mdp = load_mdp(asset_path(m_name))
        policy = load_policy(asset_path(p_name))
        diff = classical.reinforce_expectation(mdp, policy) - exact_policy_gradient(mdp, policy)
        worst = max(worst, float(np.max(np.abs(diff))))
    return worst <= 1e-12, f"max deviation {worst:.1e}"


def _random_raw_pqc(rng, n_qubits: int, d: int, n_states: int) -> policies.RawPqcPolicy:
    from .circuits import Gate, PqcCircuit
    gates = [Gate("rx", (q,), slot=0) for q in range(n_qubits)]
    for i in range(d):
        gates.append(Gate(str(rng.choice(["rx", "ry", "rz"])), (int(rng.integers(n_qubits)),),
                          param=i))
        if n_qubits > 1:
            a, b = rng.choice(n_qubits, 2, replace=False)
            gates.append(Gate(str(rng.choice(["cz", "cx"])), (int(a), int(b))))
    circuit = PqcCircuit(n_qubits, tuple(gates), rng.uniform(-np.pi, np.pi, (n_states, 1)))
    n_actions = int(rng.integers(2, 2 ** n_qubits + 1))
    partition = np.concatenate([np.arange(n_actions),
                                rng.integers(0, n_actions, 2 ** n_qubits - n_actions)])
    return policies.RawPqcPolicy(circuit, rng.permutation(partition), np.zeros(d), n_actions)


def _random_softmax1(rng, n_qubits: int, n_states: int) -> policies.Softmax1PqcPolicy:
    from .circuits import Gate, PqcCircuit
    gates = [Gate("ry", (q,), slot=q) for q in range(n_qubits)]
    if n_qubits > 1:
        gates.append(Gate("cz", (0, 1)))
    gates += [Gate("rx", (q,), slot=n_qubits + q) for q in range(n_qubits)]
    circuit = PqcCircuit(n_qubits, tuple(gates),
                         rng.uniform(-np.pi, np.pi, (n_states, 2 * n_qubits)))
    n_actions = int(rng.integers(2, 4))
    fams, ws = [], []
    for _ in range(n_actions):
        k = int(rng.integers(1, 2 ** n_qubits + 1))
        fam = np.concatenate([np.arange(k), rng.integers(0, k, 2 ** n_qubits - k)])
        fams.append(rng.permutation(fam))
        ws.append(rng.normal(0, 2, k))
    return policies.Softmax1PqcPolicy(circuit, fams, ws)


def _check_D(n_instances: int = 10, grid_points: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(n_instances):
        pol = _random_raw_pqc(rng, int(rng.integers(1, 4)), int(rng.integers(1, 5)), 2)
        grid = smoothness.random_grid(pol, grid_points, rng)
        cert = smoothness.certify(pol, grid, with_B=False)
        worst = max(worst, cert.D)
    return worst <= 1 + 1e-9, f"max D = {worst:.6f} over {n_instances} instances"


def _check_B1(n_instances: int = 10, grid_points: int = 20) -> tuple[bool, str]:
    rng = np.random.default_rng(12)
    worst = 0.0
    for _ in range(n_instances):
        pol = _random_softmax1(rng, int(rng.integers(1, 4)), 2)
        grid = smoothness.random_grid(pol, grid_points, rng, scale=3.0)
        worst = max(worst, smoothness.estimate_Bp(pol, 1, grid).value)
    return worst <= 2 + 1e-9, f"max B_1 = {worst:.6f} over {n_instances} instances"


def _check_gevrey() -> tuple[bool, str]:
    mdp = load_mdp(asset_path("chain2_long.json"))
    policy = load_policy(asset_path("raw_pqc.json"))
    rep = smoothness.verify_value_gevrey(mdp, policy, k_max=2, t_max=6)
    return rep.ok, f"{len(rep.entries)} entries, max ratio {rep.max_ratio:.3e}"


def _check_slopes() -> tuple[bool, str]:
    eps = [0.4, 0.2, 0.1]
    chain = load_mdp(asset_path("chain2.json"))
    tab = load_policy(asset_path("tabular_softmax.json"))
    variant = chain.with_gamma(1 - 1e-5).with_horizon(3)  # stencil width m = 7 at every eps
    longer = load_mdp(asset_path("chain2_long.json"))
    ref = quantum.plan_grid(longer, min(eps))
    slopes = {
        "classical_numerical": quantum.loglog_slope(
            eps, [classical.plan_numerical_gradient(variant, 2, e, 0.1).episodes for e in eps]),
        "classical_analytical": quantum.loglog_slope(
            eps, [classical.plan_reinforce_episodes(chain, tab, e, 0.1) for e in eps]),
        "quantum_numerical": quantum.loglog_slope(
            eps, [quantum.plan_grid(longer, e, box_edge=ref.grid.box_edge,
                                    ladder_m=ref.grid.ladder_m).episodes() for e in eps]),
    }
    amps = quantum.analytical_payoff_amplitudes(chain, tab)
    slopes["quantum_analytical"] = quantum.loglog_slope(
        eps, [quantum.quantum_analytical_gradient_toy(chain, tab, e, 0.1, amplitudes=amps)
              .episodes_used for e in eps])
    want = {"classical_numerical": 2, "classical_analytical": 2, "quantum_numerical": 1,
            "quantum_analytical": 1}
    ok = all(abs(slopes[k] - want[k]) <= 0.15 for k in want)
    return ok, ", ".join(f"{k}={v:.3f}" for k, v in slopes.items())


def _check_horizon() -> tuple[bool, str]:
    mdp = load_mdp(asset_path("three_state.json"))
    policy = policies.TabularSoftmaxPolicy(np.zeros((3, 2)))
    worst = 0.0
    ok = True
    for eps in (0.1, 0.01):
        T = mdp_mod.effective_horizon(mdp.r_max, mdp.gamma, eps)
        gap = abs(exact_value(mdp.with_horizon(T), policy)[0]
                  - exact_value(mdp.with_horizon(10 * T), policy)[0])
        ok &= gap <= eps
        worst = max(worst, gap)
    return ok, f"max truncation gap {worst:.2e}"


VERIFICATION_CHECKS: list[tuple[str, str, Callable[[], tuple[bool, str]]]] = [
    ("stencil", "central-difference coefficients and moments", _check_stencil),
    ("counters", "trajectory/return unitary query counts (T, T, 2T)", _check_counters),
    ("superposition", "trajectory amplitudes and probability oracle", _check_superposition),
    ("unbiased", "policy gradient theorem by enumeration", _check_unbiased),
    ("D<=1", "parameter-shift smoothness certificate for raw-PQC", _check_D),
    ("B1<=2", "log-gradient certificate for softmax_1-PQC", _check_B1),
    ("gevrey", "value-function Gevrey bound", _check_gevrey),
    ("slopes", "episode scaling in 1/eps (quadratic separation)", _check_slopes),
    ("horizon", "effective-horizon truncation", _check_horizon),
]


def run_verification_suite(out=None) -> tuple[int, list[CheckResult]]:
    out = sys.stdout if out is None else out
    results = []
    for name, anchor, fn in VERIFICATION_CHECKS:
        try:
            passed, detail = fn()
        except Exception as exc:  # a crash is a failed check, reported with its cause
            passed, detail = False, f"{type(exc).__name__}: {exc}"
        results.append(CheckResult(name, anchor, bool(passed), detail))
    width = max(len(r.name) for r in results)
    awidth = max(len(r.anchor) for r in results)
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<{width}}  {r.anchor:<{awidth}}  {r.detail}",
              file=out)
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"violated: {', '.join(failed)}", file=out)
        return EXIT_VERIFY, results
    return EXIT_OK, results


# ---------------------------------------------------------------------------
# Argument parsing

CONFIG_FLAGS = ("mdp", "policy", "estimator", "eps", "delta", "seed", "repetitions",
                "episodes", "output")


def _config_from_args(args) -> ExperimentConfig:
    flags = {k: getattr(args, k) for k in CONFIG_FLAGS if getattr(args, k, None) is not None}
    if getattr(args, "active", None) is not None:
        flags["active"] = args.active
    if args.config:
        cfg = ExperimentConfig.load(args.config)
        for k, v in flags.items():
            if getattr(cfg, k) != v:
                print(f"warning: config value {k}={getattr(cfg, k)!r} overrides --{k}={v!r}",
                      file=sys.stderr)
        return cfg
    if "seed" not in flags:
        raise InputError("invalid-config", "--seed is mandatory")
    return ExperimentConfig(**flags)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config; wins over flags")
    p.add_argument("--mdp")
    p.add_argument("--policy")
    p.add_argument("--estimator", choices=ESTIMATORS)
    p.add_argument("--eps", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--active", type=int, nargs="+")
    p.add_argument("--output")


def _cmd_validate(args) -> int:
    try:
        raw = json.loads(resolve_path(args.mdp).read_text())
    except InputError as exc:
        print(_dump_json(exc.record()), end="")
        return EXIT_INPUT
    try:
        m = Mdp(np.array(raw["transition"], float), np.array(raw["reward"], float),
                float(raw["gamma"]), int(raw["horizon"]), float(raw["r_max"]),
                int(raw["start_state"]))
    except (KeyError, ValueError, TypeError) as exc:
        print(_dump_json({"valid": False, "violations": ["shape"], "detail": str(exc)}), end="")
        return EXIT_INPUT
    res = validate_mdp(m)
    print(_dump_json({"valid": res.ok, "violations": res.violations, "details": res.details}),
          end="")
    if res.ok and args.policy:
        try:
            load_policy(resolve_path(args.policy))
        except (InputError, ValueError, KeyError) as exc:
            print(_dump_json({"policy_valid": False, "detail": str(exc)}), end="")
            return EXIT_INPUT
    return EXIT_OK if res.ok else EXIT_INPUT


def _load_pair(args) -> tuple[Mdp, Policy]:
    return ExperimentConfig(args.mdp, args.policy, seed=0).load_inputs()


def _cmd_value(args) -> int:
    m, pol = _load_pair(args)
    if args.horizon is not None:
        m = m.with_horizon(args.horizon)
    out = {"exact_value": float(exact_value(m, pol)[m.start_state]),
           "value_bound": mdp_mod.value_bound(m)}
    if args.episodes:
        out["mc_estimate"] = classical.mc_value_estimate(m, pol, args.episodes, args.seed)
    print(_dump_json(out), end="")
    return EXIT_OK


def _cmd_smoothness(args) -> int:
    pol = load_policy(resolve_path(args.policy))
    grid = smoothness.random_grid(pol, args.grid_points, args.seed)
    cert = smoothness.certify(pol, grid, Path(args.policy).stem, k_max=args.k_max)
    text = cert.to_json() + "\n"
    if args.output:
        Path(args.output).write_text(text)
    print(text, end="")
    return EXIT_OK


def _cmd_gevrey(args) -> int:
    m, pol = _load_pair(args)
    rep = smoothness.verify_value_gevrey(m, pol, args.k_max, args.t_max, D=args.D)
    print(_dump_json({"ok": rep.ok, "entries": len(rep.entries), "max_ratio": rep.max_ratio,
                      "failures": [asdict(e) for e in rep.failures()]}), end="")
    return EXIT_OK if rep.ok else EXIT_VERIFY


def _cmd_cost(args) -> int:
    models = [quantum.query_cost(f, args.d, args.T, args.r_max, args.gamma, args.eps,
                                 D=args.D, B=args.B, p=args.p) for f in quantum.FAMILIES]
    text = quantum.costs_to_csv(models)
    if args.output:
        Path(args.output).write_text(text)
    print(text, end="")
    return EXIT_OK


def _cmd_grad(args) -> int:
    cfg = _config_from_args(args)
    return run_experiment(cfg)


def _cmd_train(args) -> int:
    cfg = _config_from_args(args)
    if cfg.training is None:
        cfg.training = TrainingConfig(
            step_size=0.5 if args.step_size is None else args.step_size,
            iterations=50 if args.iterations is None else args.iterations,
            estimator=args.train_estimator or "exact",
            episodes=cfg.episodes)
    return run_training_demo(cfg)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qpgrad", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check an MDP (and optionally a policy) file")
    p.add_argument("--mdp", required=True)
    p.add_argument("--policy")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("value", help="exact value and optional Monte Carlo estimate")
    p.add_argument("--mdp", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--horizon", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_value)

    p = sub.add_parser("grad", help="run a gradient estimator for several repetitions")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_grad)

    p = sub.add_parser("smoothness", help="D_k and B_p certificate over a random grid")
    p.add_argument("--policy", required=True)
    p.add_argument("--grid-points", type=int, default=100)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_smoothness)

    p = sub.add_parser("gevrey", help="check value derivatives against the Gevrey bounds")
    p.add_argument("--mdp", required=True)
    p.add_argument("--policy", required=True)
    p.add_argument("--k-max", type=int, default=2)
    p.add_argument("--t-max", type=int, default=6)
    p.add_argument("--D", type=float, default=1.0)
    p.set_defaults(func=_cmd_gevrey)

    p = sub.add_parser("cost", help="closed-form episode counts of the four estimators")
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--T", type=int, required=True)
    p.add_argument("--r-max", type=float, default=1.0)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--D", type=float, default=1.0)
    p.add_argument("--B", type=float, default=2.0)
    p.add_argument("--p", type=float, default=1.0)
    p.add_argument("--output")
    p.set_defaults(func=_cmd_cost)

    p = sub.add_parser("train", help="gradient-ascent demo with a learning-curve CSV")
    _add_config_flags(p)
    p.add_argument("--step-size", type=float)
    p.add_argument("--iterations", type=int)
    p.add_argument("--train-estimator", choices=("exact", "reinforce"))
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("verify", help="run every certificate and invariant battery")
    p.set_defaults(func=lambda args: run_verification_suite()[0])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(_dump_json(exc.record()), end="")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
