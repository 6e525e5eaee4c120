import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import always, five_point, random_mdps, tabular_for
from qpgrad.mdp import (DegenerateProbabilityError, EnumerationCapError, Mdp, _safe_log,
                        discounted_return, effective_horizon, enumerate_trajectories,
                        exact_policy_gradient, exact_value, load_mdp, mdp_from_dict,
                        sample_episodes, sample_trajectory, save_mdp, validate_mdp,
                        value_bound, value_gradient_dp)
from qpgrad.policies import FixedPolicy, TabularSoftmaxPolicy


# -- validation -------------------------------------------------------------

def test_chain2_is_valid(chain2):
    assert validate_mdp(chain2).ok


def test_row_sum_violation(chain2):
    P = chain2.transition.copy()
    P[0, 0] = [0.9, 0.0]
    res = validate_mdp(Mdp(P, chain2.reward, 0.5, 2, 1.0))
    assert res.violations == ["row-sum"]


def test_reward_bound_violation(chain2):
    R = chain2.reward.copy()
    R[1, 1] = 1.5
    assert "reward-bound" in validate_mdp(Mdp(chain2.transition, R, 0.5, 2, 1.0)).violations


def test_parser_rejects_invalid_and_infinite(chain2, tmp_path):
    d = chain2.to_dict()
    d["reward"][0][1] = 3.0
    with pytest.raises(ValueError, match="reward-bound"):
        mdp_from_dict(d)
    d = chain2.to_dict()
    d["horizon"] = None
    with pytest.raises(ValueError, match="finite"):
        mdp_from_dict(d)
    d = chain2.to_dict()
    del d["gamma"]
    with pytest.raises(ValueError, match="missing"):
        mdp_from_dict(d)


def test_roundtrip(chain2, tmp_path):
    p = tmp_path / "m.json"
    save_mdp(chain2, p)
    back = load_mdp(p)
    assert np.array_equal(back.transition, chain2.transition)
    assert back.to_dict() == chain2.to_dict()


# -- returns and bounds -----------------------------------------------------

def test_discounted_return_examples():
    assert discounted_return([1, 1], 0.5) == 1.5
    assert discounted_return([0, 0, 0], 0.7) == 0
    assert discounted_return([1, 1, 1], 1.0) == 3
    with pytest.raises(ValueError):
        discounted_return([], 0.5)


def test_value_bound_examples(chain2, tabular):
    assert value_bound(chain2) == 2
    assert exact_value(chain2, tabular)[0] <= 2
    m = Mdp(np.ones((1, 1, 1)), np.zeros((1, 1)), 1.0, 3, 1.0)
    assert value_bound(m) == 3
    m = Mdp(np.ones((1, 1, 1)), np.zeros((1, 1)), 0.9, 1000, 2.0)
    assert value_bound(m) == pytest.approx(20)


def test_effective_horizon_examples():
    assert effective_horizon(1.0, 0.9, 0.1) == 44
    assert effective_horizon(1.0, 0.5, 1.0) == 1
    for g in (0.0, 1.0, 1.2):
        with pytest.raises(ValueError):
            effective_horizon(1.0, g, 0.1)


def test_from_infinite_horizon_truncates(three_state):
    m = Mdp.from_infinite_horizon(three_state.transition, three_state.reward, 0.9, 1.0, 0.1)
    assert m.horizon == 44 and validate_mdp(m).ok


# -- exact value -------------------------------------------------------------

def test_exact_value_examples(chain2, tabular):
    assert exact_value(chain2, tabular)[0] == pytest.approx(0.75, abs=1e-15)
    assert np.all(exact_value(chain2, tabular, 0) == 0)
    assert exact_value(chain2, always(1))[0] == 1.5
    assert exact_value(chain2, always(0))[0] == 0.0


def test_exact_value_matches_enumeration(three_state):
    pol = TabularSoftmaxPolicy(np.array([[0.3, -0.2], [1.0, 0.5], [0.0, -1.0]]))
    table = enumerate_trajectories(three_state, pol)
    assert table.probs.sum() == pytest.approx(1.0, abs=1e-12)
    assert table.probs @ table.returns == pytest.approx(exact_value(three_state, pol)[0], abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_value_within_bound(data):
    mdp = data.draw(random_mdps())
    pol = data.draw(tabular_for(mdp))
    for t in range(mdp.horizon + 1):
        V = exact_value(mdp.with_horizon(max(t, 1)), pol, t)
        assert np.all(np.abs(V) <= value_bound(mdp.with_horizon(max(t, 1))) + 1e-12)


# -- exact gradient ----------------------------------------------------------

def test_gradient_matches_finite_differences_chain2(chain2, tabular):
    f = lambda th: exact_value(chain2, tabular.with_theta(th))[0]
    assert np.max(np.abs(exact_policy_gradient(chain2, tabular) - five_point(f, tabular.theta))) < 1e-8


@settings(max_examples=40, deadline=None)
@given(data=st.data())
def test_gradient_matches_finite_differences(data):
    mdp = data.draw(random_mdps(max_states=2, max_actions=2, max_horizon=3))
    pol = data.draw(tabular_for(mdp))
    f = lambda th: exact_value(mdp, pol.with_theta(th))[mdp.start_state]
    g = exact_policy_gradient(mdp, pol)
    assert np.max(np.abs(g - five_point(f, pol.theta))) < 1e-6
    assert np.max(np.abs(g - value_gradient_dp(mdp, pol)[mdp.start_state])) < 1e-12


def test_constant_policy_zero_gradient(three_state):
    pol = FixedPolicy(np.full((3, 2), 0.5), n_params=3)
    assert np.array_equal(exact_policy_gradient(three_state, pol), np.zeros(3))


def test_deterministic_single_trajectory_zero_gradient(chain2):
    pol = always(1)
    table = enumerate_trajectories(chain2, pol, with_gradients=True)
    assert len(table) == 1 and table.probs[0] == 1.0
    assert np.all(exact_policy_gradient(chain2, pol) == 0)


def test_enumeration_cap(chain2, tabular):
    with pytest.raises(EnumerationCapError):
        exact_policy_gradient(chain2.with_horizon(12), tabular)


# -- sampling ---------------------------------------------------------------

def test_sample_trajectory_examples(chain2):
    tau = sample_trajectory(chain2, always(1), 0)
    assert tau.steps == ((0, 1, 1.0), (1, 1, 1.0))
    assert tau.return_value == 1.5 and tau.log_prob == 0.0
    assert sample_trajectory(chain2, always(0), 3).return_value == 0
    a = sample_trajectory(chain2, TabularSoftmaxPolicy(np.zeros((2, 2))), 42)
    b = sample_trajectory(chain2, TabularSoftmaxPolicy(np.zeros((2, 2))), 42)
    assert a == b


def test_sample_trajectory_log_prob(three_state):
    pol = TabularSoftmaxPolicy(np.array([[0.3, -0.2], [1.0, 0.5], [0.0, -1.0]]))
    tau = sample_trajectory(three_state, pol, 7)
    pi = pol.prob_table()
    states = [s for s, _, _ in tau.steps] + [tau.final_state]
    p = math.prod(pi[s, a] * three_state.transition[s, a, states[i + 1]]
                  for i, (s, a, _) in enumerate(tau.steps))
    assert 0 < math.exp(tau.log_prob) <= 1
    assert math.exp(tau.log_prob) == pytest.approx(p, rel=1e-12)
    assert len(tau.steps) == three_state.horizon


def test_incompatible_policy(chain2):
    with pytest.raises(ValueError):
        sample_trajectory(chain2, TabularSoftmaxPolicy(np.zeros((3, 2))), 0)


def test_log_prob_floor():
    with pytest.raises(DegenerateProbabilityError):
        _safe_log(1e-301)


def test_empirical_mean_within_5_sigma(three_state):
    pol = TabularSoftmaxPolicy(np.array([[0.3, -0.2], [1.0, 0.5], [0.0, -1.0]]))
    rets = sample_episodes(three_state, pol, 100_000, 5).returns(three_state.gamma)
    sigma = rets.std(ddof=1) / math.sqrt(len(rets))
    assert abs(rets.mean() - exact_value(three_state, pol)[0]) <= 5 * sigma
