"""Parametrized policies with exact probabilities and derivatives.

Four families share one interface:

* ``TabularSoftmaxPolicy`` -- softmax over a logit table, the classical baseline.
* ``RawPqcPolicy`` -- pi(a|s) = <P_a> on a circuit state; derivatives of any
  order by composed parameter shifts.
* ``Softmax1PqcPolicy`` -- softmax over logits sum_i w_{a,i} <P_{a,i}>_s on a
  fixed (untrained) circuit; the weights are the parameters.
* ``FixedPolicy`` -- a constant table with dummy parameters, for boundary cases.

Policies are immutable; ``with_theta`` returns a new instance.
"""
from __future__ import annotations

import itertools
import json
from abc import ABC, abstractmethod
from collections import defaultdict
from functools import cached_property
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuits import PqcCircuit, simulate_batch, simulate_state

PI_MIN = 1e-12
MAX_SHIFT_ORDER = 3
NORMALIZATION_TOL = 1e-10


class DegenerateSupportError(ValueError):
    """log pi(a|s) requested where pi(a|s) is below PI_MIN."""


class Policy(ABC):
    n_states: int
    n_actions: int

    @property
    @abstractmethod
    def theta(self) -> np.ndarray: ...

    @property
    def n_params(self) -> int:
        return len(self.theta)

    @abstractmethod
    def with_theta(self, theta) -> "Policy": ...

    @abstractmethod
    def prob_table(self) -> np.ndarray:
        """pi(a|s) for all states, shape (S, A)."""

    def probs(self, s: int) -> np.ndarray:
        return self.prob_table()[s]

    @abstractmethod
    def grad_probs(self, s: int) -> np.ndarray:
        """d pi(a|s) / d theta, shape (A, d)."""

    @abstractmethod
    def prob_derivative(self, s: int, alpha: Sequence[int]) -> np.ndarray:
        """Mixed partial d_alpha pi(.|s) for a multi-index alpha, shape (A,)."""

    def log_policy_gradient(self, s: int, a: int) -> np.ndarray:
        p = self.probs(s)[a]
        if p < PI_MIN:
            raise DegenerateSupportError(f"pi({a}|{s}) = {p:.3e} below {PI_MIN}")
        return self.grad_probs(s)[a] / p

    def log_grad_table(self) -> np.ndarray:
        """grad log pi(a|s) for all pairs, shape (S, A, d); NaN where degenerate."""
        S, A, d = self.n_states, self.n_actions, self.n_params
        out = np.full((S, A, d), np.nan)
        pi = self.prob_table()
        for s in range(S):
            g = self.grad_probs(s)
            ok = pi[s] >= PI_MIN
            out[s, ok] = g[ok] / pi[s, ok, None]
        return out

    @abstractmethod
    def to_dict(self) -> dict: ...


# ---------------------------------------------------------------------------
# Softmax machinery shared by the tabular and softmax_1 families


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_derivative(p: np.ndarray, logit_indices: Sequence[int]) -> np.ndarray:
    """d^k softmax(z)_b / dz_{j1} ... dz_{jk} evaluated at softmax(z) = p.

    Uses d_j pi_b = pi_b (delta_bj - pi_j) and the Leibniz rule over subsets of
    the remaining derivative positions.
    """
    p = np.asarray(p, dtype=float)
    cache: dict[tuple[int, ...], np.ndarray] = {(): p}

    def deriv(js: tuple[int, ...]) -> np.ndarray:
        key = tuple(sorted(js))
        if key in cache:
            return cache[key]
        j, rest = key[-1], key[:-1]
        out = np.zeros_like(p)
        out[j] += deriv(rest)[j]
        r = len(rest)
        for mask in range(1 << r):
            left = tuple(rest[i] for i in range(r) if mask >> i & 1)
            right = tuple(rest[i] for i in range(r) if not mask >> i & 1)
            out -= deriv(left) * deriv(right)[j]
        cache[key] = out
        return out

    return deriv(tuple(logit_indices))


class _LinearLogitPolicy(Policy):
    """Softmax policy whose logits are linear in theta, one logit per parameter.

    Subclasses provide ``_logit_map(s)`` returning (logit index, coefficient)
    arrays over parameters, so d logit_{j(i)} / d theta_i = coef_i(s).
    """

    @abstractmethod
    def _logits(self) -> np.ndarray: ...

    @abstractmethod
    def _logit_map(self, s: int) -> tuple[np.ndarray, np.ndarray]: ...

    @cached_property
    def _table(self) -> np.ndarray:
        return softmax(self._logits())

    def prob_table(self) -> np.ndarray:
        return self._table

    def grad_probs(self, s: int) -> np.ndarray:
        p = self._table[s]
        jac = np.diag(p) - np.outer(p, p)  # d pi_b / d z_j
        idx, coef = self._logit_map(s)
        return jac[:, idx] * coef[None, :]

    def prob_derivative(self, s: int, alpha: Sequence[int]) -> np.ndarray:
        idx, coef = self._logit_map(s)
        alpha = list(alpha)
        scale = float(np.prod(coef[alpha])) if alpha else 1.0
        if scale == 0.0:
            return np.zeros(self.n_actions)
        return scale * softmax_derivative(self._table[s], [int(idx[i]) for i in alpha])


class TabularSoftmaxPolicy(_LinearLogitPolicy):
    def __init__(self, logits):
        self.logits = np.array(logits, dtype=float)
        if self.logits.ndim != 2:
            raise ValueError("logits must be an (S, A) table")
        self.n_states, self.n_actions = self.logits.shape

    @property
    def theta(self) -> np.ndarray:
        return self.logits.ravel().copy()

    def with_theta(self, theta) -> "TabularSoftmaxPolicy":
        return TabularSoftmaxPolicy(np.asarray(theta, dtype=float).reshape(self.logits.shape))

    def _logits(self) -> np.ndarray:
        return self.logits

    def _logit_map(self, s: int):
        S, A = self.logits.shape
        params = np.arange(S * A)
        idx = params % A
        coef = (params // A == s).astype(float)
        return idx, coef

    def log_policy_gradient(self, s: int, a: int) -> np.ndarray:
        # d/d theta[s', a'] log pi(a|s) = [s'=s] (delta_{a a'} - pi(a'|s))
        out = np.zeros_like(self.logits)
        out[s] = -self._table[s]
        out[s, a] += 1.0
        return out.ravel()

    def to_dict(self) -> dict:
        return {"type": "tabular_softmax", "logits": self.logits.tolist()}


class Softmax1PqcPolicy(_LinearLogitPolicy):
    """softmax_1-PQC: fixed circuit, per-action projector partitions, trainable weights.

    ``projector_families[a][b]`` is the index i of the projector P_{a,i}
    containing computational basis state b. ``weights[a]`` has one entry per
    projector of action a; theta concatenates the weights action by action.
    """

    def __init__(self, circuit: PqcCircuit, projector_families, weights):
        if circuit.n_params != 0:
            raise ValueError("softmax_1-PQC circuits carry no trainable parameters")
        self.circuit = circuit
        self.projector_families = np.array(projector_families, dtype=np.int64)
        if self.projector_families.shape[1:] != (circuit.dim,):
            raise ValueError("each action needs a projector label per basis state")
        self.n_actions = self.projector_families.shape[0]
        self.n_states = circuit.n_states
        self.sizes = [int(f.max()) + 1 for f in self.projector_families]
        for a, f in enumerate(self.projector_families):
            if f.min() < 0 or set(np.unique(f)) != set(range(self.sizes[a])):
                raise ValueError(f"projector family of action {a} has empty or negative labels")
        self.weights = [np.array(w, dtype=float) for w in weights]
        if [len(w) for w in self.weights] != self.sizes:
            raise ValueError(f"weights sizes {[len(w) for w in self.weights]} != {self.sizes}")
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])

    @property
    def theta(self) -> np.ndarray:
        return np.concatenate(self.weights)

    def with_theta(self, theta) -> "Softmax1PqcPolicy":
        theta = np.asarray(theta, dtype=float)
        ws = [theta[self.offsets[a]:self.offsets[a + 1]] for a in range(self.n_actions)]
        return Softmax1PqcPolicy(self.circuit, self.projector_families, ws)

    @cached_property
    def projector_expectations(self) -> np.ndarray:
        """<P_{a,i}>_s flattened to shape (S, d) in theta order."""
        out = np.zeros((self.n_states, int(self.offsets[-1])))
        for s in range(self.n_states):
            born = np.abs(simulate_state(self.circuit, s, np.zeros(0))) ** 2
            for a, fam in enumerate(self.projector_families):
                out[s, self.offsets[a]:self.offsets[a + 1]] = np.bincount(
                    fam, weights=born, minlength=self.sizes[a])
        return out

    def _logits(self) -> np.ndarray:
        E = self.projector_expectations * self.theta[None, :]
        return np.stack([E[:, self.offsets[a]:self.offsets[a + 1]].sum(axis=1)
                         for a in range(self.n_actions)], axis=1)

    def _logit_map(self, s: int):
        idx = np.repeat(np.arange(self.n_actions), self.sizes)
        return idx, self.projector_expectations[s]

    def log_policy_gradient(self, s: int, a: int) -> np.ndarray:
        # closed form: delta_{a a'} <P_{a',i}> - pi(a'|s) <P_{a',i}>
        idx, E = self._logit_map(s)
        pi = self._table[s]
        return ((idx == a).astype(float) - pi[idx]) * E

    def to_dict(self) -> dict:
        return {
            "type": "softmax1_pqc",
            "circuit": self.circuit.to_dict(),
            "projector_families": self.projector_families.tolist(),
            "weights": [w.tolist() for w in self.weights],
        }


class RawPqcPolicy(Policy):
    """raw-PQC: pi(a|s) = <P_a>_{s,theta}, with ``partition[b]`` the action of basis state b."""

    def __init__(self, circuit: PqcCircuit, partition, theta, n_actions: int | None = None):
        self.circuit = circuit
        self.partition = np.array(partition, dtype=np.int64)
        if self.partition.shape != (circuit.dim,):
            raise ValueError("partition must assign an action to each of the 2^n basis states")
        self.n_actions = int(n_actions if n_actions is not None else self.partition.max() + 1)
        if self.partition.min() < 0 or self.partition.max() >= self.n_actions:
            raise ValueError("partition labels out of action range")
        self.n_states = circuit.n_states
        self._theta = np.array(theta, dtype=float)
        if self._theta.shape != (circuit.n_params,):
            raise ValueError(f"theta must have {circuit.n_params} entries")

    @property
    def theta(self) -> np.ndarray:
        return self._theta.copy()

    def with_theta(self, theta) -> "RawPqcPolicy":
        return RawPqcPolicy(self.circuit, self.partition, theta, self.n_actions)

    def action_probs_batch(self, s: int, thetas: np.ndarray) -> np.ndarray:
        """<P_a> at a batch of parameter vectors, shape (B, A)."""
        born = np.abs(simulate_batch(self.circuit, s, thetas)) ** 2
        out = np.zeros((born.shape[0], self.n_actions))
        for a in range(self.n_actions):
            out[:, a] = born[:, self.partition == a].sum(axis=1)
        return out

    @cached_property
    def _table(self) -> np.ndarray:
        return np.concatenate([self.action_probs_batch(s, self._theta[None, :])
                               for s in range(self.n_states)])

    def prob_table(self) -> np.ndarray:
        return self._table

    def shift_terms(self, alpha: Sequence[int]) -> list[tuple[np.ndarray, float]]:
        return parameter_shift_terms(alpha, self.n_params)

    def grad_probs(self, s: int) -> np.ndarray:
        d = self.n_params
        shifts = np.pi / 2 * np.eye(d)
        plus = self.action_probs_batch(s, self._theta + shifts)
        minus = self.action_probs_batch(s, self._theta - shifts)
        return ((plus - minus) / 2).T

    def prob_derivative(self, s: int, alpha: Sequence[int]) -> np.ndarray:
        terms = self.shift_terms(alpha)
        omegas = np.array([w for w, _ in terms]).reshape(len(terms), self.n_params)
        coefs = np.array([c for _, c in terms])
        vals = self.action_probs_batch(s, self._theta + omegas)
        return coefs @ vals

    def to_dict(self) -> dict:
        return {
            "type": "raw_pqc",
            "circuit": self.circuit.to_dict(),
            "partition": self.partition.tolist(),
            "n_actions": self.n_actions,
            "theta": self._theta.tolist(),
        }


class FixedPolicy(Policy):
    """Theta-independent policy table; all derivatives vanish."""

    def __init__(self, table, n_params: int = 1):
        self.table = np.array(table, dtype=float)
        self.n_states, self.n_actions = self.table.shape
        self._theta = np.zeros(n_params)

    @property
    def theta(self) -> np.ndarray:
        return self._theta.copy()

    def with_theta(self, theta) -> "FixedPolicy":
        out = FixedPolicy(self.table, len(theta))
        out._theta = np.array(theta, dtype=float)
        return out

    def prob_table(self) -> np.ndarray:
        return self.table

    def grad_probs(self, s: int) -> np.ndarray:
        return np.zeros((self.n_actions, self.n_params))

    def prob_derivative(self, s: int, alpha: Sequence[int]) -> np.ndarray:
        return self.table[s].copy() if len(alpha) == 0 else np.zeros(self.n_actions)

    def to_dict(self) -> dict:
        return {"type": "fixed", "probs": self.table.tolist(), "n_params": self.n_params}


# ---------------------------------------------------------------------------
# Parameter shifts


def parameter_shift_terms(alpha: Sequence[int], d: int) -> list[tuple[np.ndarray, float]]:
    """Shift vectors omega and weights 2^-k c_omega for d_alpha, by k-fold composition.

    Shifts are tracked in integer multiples of pi/2 so equal shifts merge
    exactly. Returns [(omega, weight)] with sum |weight| == 1.
    """
    terms: dict[tuple[int, ...], int] = {(0,) * d: 1}
    for i in alpha:
        if not 0 <= i < d:
            raise IndexError(f"parameter index {i} out of range [0, {d})")
        nxt: dict[tuple[int, ...], int] = defaultdict(int)
        for omega, c in terms.items():
            up = list(omega)
            up[i] += 1
            down = list(omega)
            down[i] -= 1
            nxt[tuple(up)] += c
            nxt[tuple(down)] -= c
        terms = {w: c for w, c in nxt.items() if c != 0}
    k = len(alpha)
    total = sum(abs(c) for c in terms.values())
    assert total == 2 ** k, f"shift weights sum to {total}, expected {2 ** k}"
    return [(np.array(w, dtype=float) * np.pi / 2, c / 2 ** k) for w, c in terms.items()]


def policy_probs(policy: Policy, s: int) -> np.ndarray:
    return policy.probs(s)


def parameter_shift_derivative(policy: RawPqcPolicy, s: int, a: int, i: int) -> float:
    if not 0 <= i < policy.n_params:
        raise IndexError(f"parameter index {i} out of range")
    shift = np.zeros(policy.n_params)
    shift[i] = np.pi / 2
    both = policy.action_probs_batch(s, np.stack([policy.theta + shift, policy.theta - shift]))
    return float((both[0, a] - both[1, a]) / 2)


def higher_order_parameter_shift(policy: RawPqcPolicy, s: int, a: int, alpha: Sequence[int],
                                 max_order: int = MAX_SHIFT_ORDER) -> float:
    if len(alpha) > max_order:
        raise ValueError(f"derivative order {len(alpha)} exceeds cap {max_order}")
    return float(policy.prob_derivative(s, alpha)[a])


def log_policy_gradient(policy: Policy, s: int, a: int) -> np.ndarray:
    return policy.log_policy_gradient(s, a)


def multi_indices(d: int, k: int):
    """Sorted multi-indices in [d]^k; mixed partials commute so these cover all of [d]^k."""
    return itertools.combinations_with_replacement(range(d), k)


# ---------------------------------------------------------------------------
# JSON files


def policy_from_dict(data: dict) -> Policy:
    kind = data.get("type")
    if kind == "tabular_softmax":
        return TabularSoftmaxPolicy(data["logits"])
    if kind == "raw_pqc":
        return RawPqcPolicy(PqcCircuit.from_dict(data["circuit"]), data["partition"],
                            data["theta"], data.get("n_actions"))
    if kind == "softmax1_pqc":
        return Softmax1PqcPolicy(PqcCircuit.from_dict(data["circuit"]),
                                 data["projector_families"], data["weights"])
    if kind == "fixed":
        return FixedPolicy(data["probs"], data.get("n_params", 1))
    raise ValueError(f"unknown policy type {kind!r}")


def load_policy(path) -> Policy:
    policy = policy_from_dict(json.loads(Path(path).read_text()))
    rows = policy.prob_table().sum(axis=1)
    if np.any(np.abs(rows - 1.0) > NORMALIZATION_TOL):
        raise ValueError("policy rows do not sum to one")
    return policy


def save_policy(policy: Policy, path) -> None:
    Path(path).write_text(json.dumps(policy.to_dict(), indent=2) + "\n")
