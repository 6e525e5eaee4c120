import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_raw_pqc, random_softmax1, ry_policy
from qpgrad.circuits import Gate, PqcCircuit
from qpgrad.policies import FixedPolicy, Softmax1PqcPolicy, TabularSoftmaxPolicy
from qpgrad.smoothness import (Partition, certify, enumerate_partitions, estimate_Bp,
                               estimate_Dk, gevrey_g_bound, gevrey_U_bound, gevrey_U_sum,
                               random_grid, recheck_witness, richardson_derivative,
                               verify_value_gevrey)

# integer partition function p(k), k = 1..12
PARTITION_COUNTS = [1, 2, 3, 5, 7, 11, 15, 22, 30, 42, 56, 77]


# -- partitions ----------------------------------------------------------------------

def test_partitions_of_three():
    assert [p.parts for p in enumerate_partitions(3)] == [(3,), (2, 1), (1, 1, 1)]


def test_partitions_of_one():
    assert [p.parts for p in enumerate_partitions(1)] == [(1,)]


@pytest.mark.parametrize("k", range(1, 13))
def test_partition_counts(k):
    parts = enumerate_partitions(k)
    assert len(parts) == PARTITION_COUNTS[k - 1]
    assert len({p.parts for p in parts}) == len(parts)
    for p in parts:
        assert sum(p.parts) == k
        assert list(p.parts) == sorted(p.parts, reverse=True)


def test_partition_cap():
    with pytest.raises(ValueError):
        enumerate_partitions(13)
    with pytest.raises(ValueError):
        enumerate_partitions(0)


def test_partition_multiplicities():
    assert Partition((2, 1, 1)).multiplicities == {2: 1, 1: 2}


# -- g and U -----------------------------------------------------------------------

@given(t=st.integers(0, 10), D1=st.floats(0.1, 3), gamma=st.floats(0.1, 1), r=st.floats(0.1, 5))
def test_g_first_order(t, D1, gamma, r):
    assert gevrey_g_bound(1, t, [D1], r, gamma) == pytest.approx(gamma**t * r * D1 * (t + 1))


def test_g_examples():
    assert gevrey_g_bound(1, 0, [0.7], 2.0, 0.9) == pytest.approx(1.4)
    assert gevrey_g_bound(2, 1, [1, 1], 1.0, 1.0) == 4


def test_U_example():
    assert gevrey_U_bound(1, 4, 1.0, 1.0, 0.9) == pytest.approx(288)


def test_U_precondition():
    with pytest.raises(ValueError):
        gevrey_U_bound(1, 2, 1.0, 1.0, 0.9)


def test_U_monotone_in_k():
    vals = [gevrey_U_bound(k, 4, 1.0, 1.0, 0.9) for k in range(1, 6)]
    assert all(a < b for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("t", [3, 4, 5, 6])
@pytest.mark.parametrize("gamma", [0.7, 0.9, 0.99])
def test_U_dominates_partition_sum(k, t, gamma):
    if gamma * t < 2:
        pytest.skip("bound needs gamma * t >= 2")
    assert gevrey_U_sum(k, t, [1.0] * k, 1.0, gamma) <= gevrey_U_bound(k, t, 1.0, 1.0, gamma)


# -- D_k ---------------------------------------------------------------------------

def test_Dk_ry_closed_form():
    pol = ry_policy(0.0)
    grid = np.linspace(-np.pi, np.pi, 9)[:, None]  # contains pi/2
    w = estimate_Dk(pol, 1, grid)
    # pi(0) = cos^2(theta/2), sum_a |d pi| = |sin theta|
    assert w.value == pytest.approx(1.0, abs=1e-12)
    assert abs(math.sin(w.theta[0])) == pytest.approx(1.0)


def test_Dk_constant_policy():
    pol = FixedPolicy(np.full((2, 3), 1 / 3), 2)
    for k in (1, 2, 3):
        assert estimate_Dk(pol, k, np.zeros((1, 2))).value == 0


def test_Dk_order_cap(raw_pqc):
    with pytest.raises(ValueError):
        estimate_Dk(raw_pqc, 4, np.zeros((1, 2)))


@pytest.mark.parametrize("seed", range(100))
def test_raw_pqc_D_at_most_one(seed):
    rng = np.random.default_rng(seed)
    pol = random_raw_pqc(rng, int(rng.integers(1, 3)), int(rng.integers(1, 3)), 2)
    grid = random_grid(pol, 6, rng)
    for k in (1, 2, 3):
        assert estimate_Dk(pol, k, grid).value <= 1 + 1e-9


# -- B_p ---------------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(100))
def test_softmax1_B1_at_most_two(seed):
    rng = np.random.default_rng(seed)
    pol = random_softmax1(rng, int(rng.integers(1, 3)), 2)
    grid = random_grid(pol, 10, rng, scale=5.0)
    assert estimate_Bp(pol, 1, grid).value <= 2 + 1e-9


def _degenerate_softmax1(w0, w1):
    circuit = PqcCircuit(1, (Gate("ry", (0,), slot=0),), np.zeros((1, 1)))
    return Softmax1PqcPolicy(circuit, [[0, 0], [0, 0]], [[w0], [w1]])


@given(w0=st.floats(-3, 3), w1=st.floats(-3, 3))
def test_softmax1_degenerate_closed_form(w0, w1):
    pol = _degenerate_softmax1(w0, w1)
    pi = pol.probs(0)
    for a in (0, 1):
        assert np.abs(pol.log_policy_gradient(0, a)).sum() == pytest.approx(2 * (1 - pi[a]))


def test_softmax1_degenerate_half():
    pol = _degenerate_softmax1(0.4, 0.4)
    assert estimate_Bp(pol, 1, [pol.theta]).value == pytest.approx(1.0)


def test_single_action_B():
    pol = TabularSoftmaxPolicy(np.zeros((3, 1)))
    for p in (1, 2, np.inf):
        assert estimate_Bp(pol, p, [pol.theta]).value == 0


def test_Bp_rejects_other_norms(softmax1):
    with pytest.raises(ValueError):
        estimate_Bp(softmax1, 3, [softmax1.theta])


# -- certificates -----------------------------------------------------------------

def test_certificate_witnesses(raw_pqc, softmax1):
    for pol in (raw_pqc, softmax1):
        cert = certify(pol, random_grid(pol, 8, 0), "p")
        assert cert.verify_witnesses(pol)
        for w in cert.Dk.values():
            assert abs(recheck_witness(pol, w, "D") - w.value) <= 1e-9
        assert set(cert.to_dict()) == {"policy", "grid", "D", "D_k", "B_p"}


def test_certificate_D_is_max_root(raw_pqc):
    cert = certify(raw_pqc, random_grid(raw_pqc, 8, 1), with_B=False)
    assert cert.D == pytest.approx(max(w.value ** (1 / k) for k, w in cert.Dk.items()))
    assert cert.D <= 1 + 1e-9


def test_certificate_tamper_detected(raw_pqc):
    cert = certify(raw_pqc, random_grid(raw_pqc, 4, 2), with_B=False)
    w = cert.Dk[1]
    cert.Dk[1] = type(w)(w.value + 1e-6, w.state, w.theta, w.alpha)
    assert not cert.verify_witnesses(raw_pqc)


# -- value-function Gevrey check ---------------------------------------------------

def test_richardson_on_known_function():
    f = lambda th: math.sin(th[0]) * math.exp(th[1])
    val, ok = richardson_derivative(f, np.array([0.3, 0.2]), (0, 1))
    assert ok
    assert val == pytest.approx(math.cos(0.3) * math.exp(0.2), rel=1e-7)


def test_gevrey_chain2_long(chain2_long, raw_pqc):
    rep = verify_value_gevrey(chain2_long, raw_pqc, k_max=2, t_max=4)
    assert rep.entries
    assert rep.ok, rep.failures()
    assert rep.max_ratio < 1
    assert {len(e.alpha) for e in rep.entries} == {0, 1, 2}


def test_gevrey_constant_policy(chain2_long):
    pol = FixedPolicy(np.full((2, 2), 0.5), 2)
    rep = verify_value_gevrey(chain2_long, pol, k_max=2, t_max=4)
    assert rep.ok
    assert all(abs(e.derivative) <= 1e-6 for e in rep.entries if e.alpha)


def test_gevrey_skips_short_horizons(chain2_long, raw_pqc):
    rep = verify_value_gevrey(chain2_long, raw_pqc, k_max=1, t_max=4)
    assert min(e.t for e in rep.entries) == 3  # 0.9 * 2 < 2


def test_Bp_degenerate_support_propagates():
    from qpgrad.policies import DegenerateSupportError
    pol = ry_policy(0.0)
    with pytest.raises(DegenerateSupportError):
        estimate_Bp(pol, 1, [[np.pi]])  # pi(0) = cos^2(pi/2) ~ 1e-33
