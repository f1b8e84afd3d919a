import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpbounds.mdp import (BoxSpace, FiniteNoise, FiniteSpace, MdpModel, ModelError, NotEnumerableError, ProductMetric,
                           TablePolicy, check_model, evaluate_policy_mc, solve_exact, step, transition_matrix)
from mdpbounds.testbeds import chain_model, deterministic_model, gaussian_model, make_testbed

from oracles import brute_force_value


@pytest.mark.parametrize("horizon", [1, 3, 4, 5])
def test_exact_solution_matches_policy_enumeration(horizon):
    model = chain_model(horizon)
    value, _ = brute_force_value(model, 0.0)
    assert solve_exact(model).value0(0.0) == pytest.approx(value, abs=1e-12)


def test_two_state_chain_by_hand():
    # H=1 from x=0: stay -> 0.1 + E level(clip(0 + eps)) = 0.1 + (0.1 + 1.0)/2
    # move -> 0.1 - 0.3 + E level(clip(1 + eps)) = -0.2 + (0.1 + 1.0)/2
    model = chain_model(1, n_states=2)
    ex = solve_exact(model)
    assert ex.value0(0.0) == pytest.approx(0.65, abs=1e-15)
    assert ex.policy[0, 0] == 0


def test_exact_ties_pick_lowest_index():
    # both actions do the same thing, so every stage is a tie
    model = MdpModel(3, FiniteSpace([0.0, 1.0]), FiniteSpace([0.0, 1.0]), FiniteNoise([-1.0, 1.0], [0.5, 0.5]),
                     lambda t, x, a, e: np.clip(x + e, 0.0, 1.0), lambda h, x, a: 0.5 * x[:, 0],
                     lambda x: x[:, 0], r_max=1.0, lipschitz_reward=0.5, lipschitz_kernel=1.0)
    ex = solve_exact(model)
    assert np.all(ex.q[..., 0] == ex.q[..., 1])
    assert np.all(ex.policy == 0)


def test_transition_rows_are_distributions():
    model = chain_model(3)
    P = transition_matrix(model, 1)
    assert P.shape == (3, 2, 3)
    np.testing.assert_allclose(P.sum(axis=2), 1.0, atol=1e-15)


def test_dense_grid_not_enumerable():
    with pytest.raises(NotEnumerableError):
        transition_matrix(gaussian_model(), 1)


def test_step_rejects_out_of_range_inputs():
    model = chain_model(3)
    x = np.array([[0.0]])
    a = np.array([[1.0]])
    e = np.array([[1.0]])
    assert step(model, 1, x, a, e)[0, 0] == 2.0
    with pytest.raises(ModelError):
        step(model, 0, x, a, e)
    with pytest.raises(ModelError):
        step(model, model.horizon + 1, x, a, e)
    with pytest.raises(ModelError):
        step(model, 1, np.array([[7.0]]), a, e)
    with pytest.raises(ModelError):
        step(model, 1, x, np.array([[0.5]]), e)


def test_check_model_clean_and_dirty():
    assert check_model(chain_model(3), n=64, seed=0) == []
    assert check_model(gaussian_model(), n=64, seed=0) == []
    bad = chain_model(3)
    from dataclasses import replace

    bad = replace(bad, r_max=0.5)
    assert any("r_max" in v for v in check_model(bad, n=64, seed=0))


def test_finite_space_locate():
    space = FiniteSpace([2.0, 0.0, 1.0])
    np.testing.assert_array_equal(space.locate([[1.0], [2.0], [5.0]]), [2, 0, -1])
    with pytest.raises(ModelError):
        space.index_of([[5.0]])


def test_box_space_without_grid_is_not_enumerable():
    with pytest.raises(NotEnumerableError):
        BoxSpace(-np.inf, np.inf).eval_grid


def test_finite_noise_validation():
    with pytest.raises(ModelError):
        FiniteNoise([0.0, 1.0], [0.3, 0.3])
    with pytest.raises(ModelError):
        FiniteNoise([0.0, 1.0], [1.2, -0.2])


points = st.floats(-10, 10, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["l1", "l2", "max"]), st.lists(points, min_size=6, max_size=6))
def test_product_metric_axioms(combiner, v):
    rho = ProductMetric(combiner)
    p, q, r = (v[0], v[1]), (v[2], v[3]), (v[4], v[5])
    d = lambda u, w: rho(u[0], u[1], w[0], w[1])  # noqa: E731
    assert d(p, p) == 0.0
    assert d(p, q) == pytest.approx(d(q, p))
    assert d(p, r) <= d(p, q) + d(q, r) + 1e-9


def test_optimal_policy_value_by_monte_carlo():
    model = chain_model(4)
    ex = solve_exact(model)
    mean, se = evaluate_policy_mc(model, ex.as_policy(), 0.0, 8192, seed=5)
    assert abs(mean - ex.value0(0.0)) <= 4 * se


def test_deterministic_model_has_zero_variance():
    model = deterministic_model(4, degenerate_noise=True)
    ex = solve_exact(model)
    mean, se = evaluate_policy_mc(model, ex.as_policy(), 0.0, 512, seed=1)
    assert se == 0.0
    assert mean == pytest.approx(ex.value0(0.0), abs=1e-12)


def test_policy_evaluation_is_thread_independent():
    tb = make_testbed("chain")
    pol = TablePolicy(tb.model, np.ones((4, 3), dtype=int))
    a = evaluate_policy_mc(tb.model, pol, 0.0, 5000, seed=3, threads=1)
    b = evaluate_policy_mc(tb.model, pol, 0.0, 5000, seed=3, threads=4)
    assert a == b
