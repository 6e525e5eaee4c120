import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import five_point, random_raw_pqc, random_softmax1, ry_policy
from qpgrad.circuits import Gate, PqcCircuit, circuit_unitary, simulate_state
from qpgrad.policies import (DegenerateSupportError, FixedPolicy, RawPqcPolicy,
                             Softmax1PqcPolicy, TabularSoftmaxPolicy,
                             higher_order_parameter_shift, load_policy, log_policy_gradient,
                             multi_indices, parameter_shift_derivative, parameter_shift_terms,
                             policy_from_dict, policy_probs, save_policy, softmax_derivative)


# -- circuits -----------------------------------------------------------------

def test_empty_circuit_gives_zero_state():
    psi = simulate_state(PqcCircuit(2, ()), 0, np.zeros(0))
    assert np.array_equal(psi, [1, 0, 0, 0])


def test_ry_pi_flips():
    psi = simulate_state(PqcCircuit(1, (Gate("ry", (0,), param=0),)), 0, [np.pi])
    assert np.allclose(psi, [0, 1], atol=1e-15)


def test_rotation_convention_matches_matrix_exponential():
    # exp(-i a G / 2) = cos(a/2) I - i sin(a/2) G for a Pauli G
    X = np.array([[0, 1], [1, 0]])
    a = 0.73
    U = circuit_unitary(PqcCircuit(1, (Gate("rx", (0,), param=0),)), 0, [a])
    assert np.allclose(U, np.cos(a / 2) * np.eye(2) - 1j * np.sin(a / 2) * X, atol=1e-15)


def test_qubit_order_and_cx():
    # X on qubit 0 (most significant) then CX(0 -> 1) gives |11>
    c = PqcCircuit(2, (Gate("rx", (0,), param=0), Gate("cx", (0, 1))))
    psi = simulate_state(c, 0, [np.pi])
    assert abs(psi[3]) == pytest.approx(1.0)
    c = PqcCircuit(2, (Gate("rx", (1,), param=0), Gate("cx", (1, 0))))
    assert abs(simulate_state(c, 0, [np.pi])[3]) == pytest.approx(1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), d=st.integers(1, 4))
def test_unitarity_and_norm(seed, n, d):
    rng = np.random.default_rng(seed)
    pol = random_raw_pqc(rng, n, d, 2)
    phi = rng.uniform(-4, 4, d)
    U = circuit_unitary(pol.circuit, 1, phi)
    assert np.allclose(U.conj().T @ U, np.eye(2**n), atol=1e-10)
    psi = simulate_state(pol.circuit, 1, phi)
    assert abs(np.linalg.norm(psi) - 1) < 1e-12
    assert np.allclose(U[:, 0], psi, atol=1e-12)


def test_circuit_validation():
    with pytest.raises(ValueError):
        PqcCircuit(1, (Gate("ry", (1,), param=0),))
    with pytest.raises(ValueError):
        PqcCircuit(1, (Gate("ry", (0,), param=1),))  # parameter 0 unbound
    with pytest.raises(ValueError):
        PqcCircuit(11, ())
    with pytest.raises(ValueError):
        simulate_state(PqcCircuit(1, (Gate("ry", (0,), param=0),)), 0, [0.1, 0.2])


# -- probabilities -----------------------------------------------------------

def test_ry_policy_probs():
    assert policy_probs(ry_policy(np.pi / 2), 0)[0] == pytest.approx(0.5)
    th = 0.37
    assert policy_probs(ry_policy(th), 0)[0] == pytest.approx(np.cos(th / 2) ** 2)


def test_softmax1_zero_weights_uniform(softmax1):
    pol = softmax1.with_theta(np.zeros(softmax1.n_params))
    assert np.allclose(pol.prob_table(), 0.5, atol=1e-15)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3))
def test_rows_normalised(seed, n):
    rng = np.random.default_rng(seed)
    for pol in (random_raw_pqc(rng, n, 2, 3), random_softmax1(rng, n, 3)):
        assert np.allclose(pol.prob_table().sum(axis=1), 1, atol=1e-10)


def test_softmax1_definition(softmax1):
    # logits are sum_i w_{a,i} <P_{a,i}>_s with projector expectations from the statevector
    s = 1
    born = np.abs(simulate_state(softmax1.circuit, s, np.zeros(0))) ** 2
    logits = [sum(w * born[softmax1.projector_families[a] == i].sum()
                  for i, w in enumerate(softmax1.weights[a])) for a in range(2)]
    e = np.exp(logits)
    assert np.allclose(softmax1.probs(s), e / e.sum(), atol=1e-14)


# -- parameter shifts --------------------------------------------------------

def test_parameter_shift_example():
    assert parameter_shift_derivative(ry_policy(np.pi / 2), 0, 0, 0) == pytest.approx(-0.5)
    th = 1.1
    assert parameter_shift_derivative(ry_policy(th), 0, 0, 0) == pytest.approx(-np.sin(th) / 2)


def test_parameter_not_influencing_output():
    # parameter 1 acts on a qubit the partition ignores
    c = PqcCircuit(2, (Gate("ry", (0,), param=0), Gate("ry", (1,), param=1)))
    pol = RawPqcPolicy(c, [0, 0, 1, 1], [0.3, 0.8])
    assert parameter_shift_derivative(pol, 0, 0, 1) == pytest.approx(0.0, abs=1e-15)


def test_second_order_shift_example():
    assert higher_order_parameter_shift(ry_policy(0.0), 0, 0, (0, 0)) == pytest.approx(-0.5)
    th = 0.9
    assert higher_order_parameter_shift(ry_policy(th), 0, 0, (0, 0)) == pytest.approx(-np.cos(th) / 2)


def test_mixed_shift_factorises():
    # two independent qubits, action 0 = |00>: pi = cos^2(a/2) cos^2(b/2)
    c = PqcCircuit(2, (Gate("ry", (0,), param=0), Gate("ry", (1,), param=1)))
    a, b = 0.4, -1.2
    pol = RawPqcPolicy(c, [0, 1, 1, 1], [a, b])
    want = (-np.sin(a) / 2) * (-np.sin(b) / 2)
    assert higher_order_parameter_shift(pol, 0, 0, (0, 1)) == pytest.approx(want, abs=1e-14)


def test_first_order_consistency(raw_pqc):
    for i in range(2):
        for a in range(2):
            assert higher_order_parameter_shift(raw_pqc, 1, a, (i,)) == pytest.approx(
                parameter_shift_derivative(raw_pqc, 1, a, i), abs=1e-15)


def test_shift_order_cap(raw_pqc):
    with pytest.raises(ValueError):
        higher_order_parameter_shift(raw_pqc, 0, 0, (0, 0, 1, 1))


@pytest.mark.parametrize("alpha", [(0,), (0, 0), (0, 1), (1, 1, 0), (2, 2, 2)])
def test_shift_weights_sum(alpha):
    terms = parameter_shift_terms(alpha, 3)
    assert sum(abs(c) for _, c in terms) == pytest.approx(1.0)


def _fd_nth(f, x, alpha, h=1e-2):
    """Nested 5-point differences for a multi-index of order <= 3."""
    if not alpha:
        return f(x)
    i, rest = alpha[0], alpha[1:]
    e = np.zeros(len(x))
    e[i] = h
    g = lambda y: _fd_nth(f, y, rest, h)
    return (-g(x + 2 * e) + 8 * g(x + e) - 8 * g(x - e) + g(x - 2 * e)) / (12 * h)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 3), k=st.integers(1, 3))
def test_derivatives_match_finite_differences(seed, n, k):
    rng = np.random.default_rng(seed)
    pol = random_raw_pqc(rng, n, 2, 2)
    alpha = tuple(sorted(rng.integers(0, 2, k)))
    s = 1
    f = lambda th: pol.with_theta(th).probs(s)
    h = {1: 1e-3, 2: 1e-2, 3: 3e-2}[k]
    fd = _fd_nth(f, pol.theta, alpha, h)
    assert np.max(np.abs(pol.prob_derivative(s, alpha) - fd)) < 1e-6


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 3))
def test_softmax_derivatives_match_finite_differences(seed, k):
    rng = np.random.default_rng(seed)
    pol = TabularSoftmaxPolicy(rng.normal(0, 1, (2, 3)))
    alpha = tuple(sorted(rng.integers(0, 6, k)))
    h = {1: 1e-3, 2: 1e-2, 3: 3e-2}[k]
    fd = _fd_nth(lambda th: pol.with_theta(th).probs(0), pol.theta, alpha, h)
    assert np.max(np.abs(pol.prob_derivative(0, alpha) - fd)) < 1e-6


def test_softmax_derivative_second_order_against_fd():
    p = np.array([0.2, 0.5, 0.3])
    z = np.log(p)
    sm = lambda z: np.exp(z) / np.exp(z).sum()
    h = 1e-3
    e = np.eye(3)[1] * h
    fd = (sm(z + e) - 2 * sm(z) + sm(z - e)) / h**2
    assert np.allclose(softmax_derivative(p, [1, 1]), fd, atol=1e-6)


# -- log gradients -----------------------------------------------------------

def test_softmax1_degenerate_log_gradient_norm():
    # degenerate family P_{a,i} = P_i for both actions, zero weights
    c = PqcCircuit(1, (Gate("ry", (0,), slot=0),), [[0.7]])
    pol = Softmax1PqcPolicy(c, [[0, 1], [0, 1]], [[0.0, 0.0], [0.0, 0.0]])
    for a in range(2):
        g = log_policy_gradient(pol, 0, a)
        assert np.abs(g).sum() == pytest.approx(2 * (1 - pol.probs(0)[a]))
        assert np.abs(g).sum() == pytest.approx(1.0)


def test_tabular_log_gradient_identity_and_fd():
    pol = TabularSoftmaxPolicy(np.array([[0.2, -0.5, 1.0], [0.0, 0.3, -0.1]]))
    s, a = 1, 2
    g = log_policy_gradient(pol, s, a)
    want = np.zeros((2, 3))
    want[s] = -pol.probs(s)
    want[s, a] += 1
    assert np.allclose(g, want.ravel(), atol=1e-15)
    fd = five_point(lambda th: np.log(pol.with_theta(th).probs(s)[a]), pol.theta)
    assert np.max(np.abs(g - fd)) < 1e-6


def test_generic_log_gradient_matches_closed_form(softmax1, tabular):
    # base-class route grad pi / pi against each subclass's closed form
    from qpgrad.policies import Policy
    for pol in (softmax1, tabular):
        for s in range(2):
            for a in range(2):
                assert np.allclose(Policy.log_policy_gradient(pol, s, a),
                                   pol.log_policy_gradient(s, a), atol=1e-14)


def test_raw_pqc_log_gradient_fd(raw_pqc):
    fd = five_point(lambda th: np.log(raw_pqc.with_theta(th).probs(1)[0]), raw_pqc.theta)
    assert np.max(np.abs(log_policy_gradient(raw_pqc, 1, 0) - fd)) < 1e-6


def test_constant_single_action_zero_gradient():
    pol = TabularSoftmaxPolicy(np.zeros((2, 1)))
    assert np.all(log_policy_gradient(pol, 0, 0) == 0)
    assert np.all(FixedPolicy(np.ones((2, 1)), 2).log_policy_gradient(1, 0) == 0)


def test_degenerate_support_raises():
    pol = ry_policy(np.pi)  # pi(0) = cos^2(pi/2) ~ 1e-33
    with pytest.raises(DegenerateSupportError):
        log_policy_gradient(pol, 0, 0)


# -- JSON files ---------------------------------------------------------------

@pytest.mark.parametrize("name", ["raw_pqc.json", "softmax1.json", "tabular_softmax.json"])
def test_policy_roundtrip(name, tmp_path):
    from qpgrad import load_asset_policy
    pol = load_asset_policy(name)
    save_policy(pol, tmp_path / "p.json")
    back = load_policy(tmp_path / "p.json")
    assert back.to_dict() == pol.to_dict()
    assert np.array_equal(back.prob_table(), pol.prob_table())


def test_unknown_policy_type():
    with pytest.raises(ValueError):
        policy_from_dict({"type": "nope"})


def test_multi_indices_cover_sorted():
    assert list(multi_indices(2, 2)) == [(0, 0), (0, 1), (1, 1)]
