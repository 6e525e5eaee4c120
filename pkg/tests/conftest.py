import numpy as np
import pytest
from hypothesis import strategies as st

from qpgrad import load_asset_mdp, load_asset_policy
from qpgrad.circuits import Gate, PqcCircuit
from qpgrad.mdp import Mdp
from qpgrad.policies import RawPqcPolicy, Softmax1PqcPolicy, TabularSoftmaxPolicy


@pytest.fixture
def chain2():
    return load_asset_mdp("chain2.json")


@pytest.fixture
def chain2_long():
    return load_asset_mdp("chain2_long.json")


@pytest.fixture
def three_state():
    return load_asset_mdp("three_state.json")


@pytest.fixture
def tabular():
    return load_asset_policy("tabular_softmax.json")


@pytest.fixture
def raw_pqc():
    return load_asset_policy("raw_pqc.json")


@pytest.fixture
def raw_pqc_1():
    return load_asset_policy("raw_pqc_1param.json")


@pytest.fixture
def softmax1():
    return load_asset_policy("softmax1.json")


def always(action: int, n_states: int = 2, n_actions: int = 2):
    """Tabular policy that (numerically) always picks ``action``."""
    logits = np.full((n_states, n_actions), -800.0)
    logits[:, action] = 0.0
    return TabularSoftmaxPolicy(logits)


def five_point(f, x: np.ndarray, h: float = 1e-3) -> np.ndarray:
    """Componentwise 5-point central differences of a scalar function."""
    g = np.zeros(len(x))
    for i in range(len(x)):
        e = np.zeros(len(x))
        e[i] = h
        g[i] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


def ry_policy(theta: float, n_states: int = 1) -> RawPqcPolicy:
    circuit = PqcCircuit(1, (Gate("ry", (0,), param=0),), np.zeros((n_states, 0)))
    return RawPqcPolicy(circuit, [0, 1], [theta])


# ---------------------------------------------------------------------------
# Hypothesis strategies


@st.composite
def random_mdps(draw, max_states=4, max_actions=4, max_horizon=4):
    S = draw(st.integers(1, max_states))
    A = draw(st.integers(1, max_actions))
    T = draw(st.integers(1, max_horizon))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    sparsify = rng.random((S, A, S)) < 0.3
    P = np.where(sparsify, 0.0, P)
    P[..., 0] += 1e-3
    P /= P.sum(axis=2, keepdims=True)
    r_max = draw(st.floats(0.5, 2.0))
    R = rng.uniform(-r_max, r_max, (S, A))
    gamma = draw(st.sampled_from([0.0, 0.5, 0.9, 0.99, 1.0]))
    return Mdp(P, R, gamma, T, r_max, int(rng.integers(S)))


@st.composite
def tabular_for(draw, mdp):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return TabularSoftmaxPolicy(rng.normal(0, 1.5, (mdp.n_states, mdp.n_actions)))


def random_raw_pqc(rng, n_qubits, d, n_states, n_actions=None):
    gates = [Gate("rx", (q,), slot=0) for q in range(n_qubits)]
    for i in range(d):
        gates.append(Gate(str(rng.choice(["rx", "ry", "rz"])), (int(rng.integers(n_qubits)),),
                          param=i))
        if n_qubits > 1:
            a, b = rng.choice(n_qubits, 2, replace=False)
            gates.append(Gate(str(rng.choice(["cz", "cx"])), (int(a), int(b))))
    circuit = PqcCircuit(n_qubits, tuple(gates), rng.uniform(-np.pi, np.pi, (n_states, 1)))
    A = n_actions or int(rng.integers(2, 2**n_qubits + 1))
    partition = np.concatenate([np.arange(A), rng.integers(0, A, 2**n_qubits - A)])
    return RawPqcPolicy(circuit, rng.permutation(partition), rng.uniform(-np.pi, np.pi, d), A)


def random_softmax1(rng, n_qubits, n_states, n_actions=None):
    gates = [Gate("ry", (q,), slot=q) for q in range(n_qubits)]
    if n_qubits > 1:
        gates.append(Gate("cx", (0, n_qubits - 1)))
    gates += [Gate("rx", (q,), slot=n_qubits + q) for q in range(n_qubits)]
    circuit = PqcCircuit(n_qubits, tuple(gates),
                         rng.uniform(-np.pi, np.pi, (n_states, 2 * n_qubits)))
    A = n_actions or int(rng.integers(2, 4))
    fams, ws = [], []
    for _ in range(A):
        k = int(rng.integers(1, 2**n_qubits + 1))
        fams.append(rng.permutation(np.concatenate([np.arange(k),
                                                    rng.integers(0, k, 2**n_qubits - k)])))
        ws.append(rng.normal(0, 2, k))
    return Softmax1PqcPolicy(circuit, fams, ws)
