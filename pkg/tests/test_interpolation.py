import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mdpbounds.interpolation import (GridInterpolant, InterpolationError, central_interpolate, covering_radius,
                                     max_slope, product_grid)
from mdpbounds.mdp import ProductMetric


def test_product_grid_is_state_major():
    xs, acts = product_grid(np.array([0.0, 1.0]), np.array([5.0, 6.0, 7.0]))
    np.testing.assert_array_equal(xs[:, 0], [0, 0, 0, 1, 1, 1])
    np.testing.assert_array_equal(acts[:, 0], [5, 6, 7, 5, 6, 7])


def test_single_node_interpolant_is_constant():
    g = GridInterpolant(np.array([[0.0]]), np.array([[0.0]]), np.array([2.5]), 3.0)
    out = g(np.array([[4.0], [-1.0]]), np.array([[1.0], [0.0]]))
    np.testing.assert_allclose(out[:, 0], 2.5)


def test_validation_errors():
    with pytest.raises(InterpolationError):
        GridInterpolant(np.zeros((0, 1)), np.zeros((0, 1)), np.zeros((0, 1)), 1.0)
    with pytest.raises(InterpolationError):
        GridInterpolant(np.zeros((2, 1)), np.zeros((2, 1)), np.zeros((2, 1)), 0.0)
    with pytest.raises(InterpolationError):
        GridInterpolant(np.zeros((2, 1)), np.zeros((3, 1)), np.zeros((2, 1)), 1.0)


def test_one_dimensional_central_value():
    # nodes 0 and 1 with values 0 and 1, L = 2: at 0.25 envelopes are max(-0.5, -0.5) and min(0.5, 2.5)
    g = GridInterpolant(np.array([[0.0], [1.0]]), np.zeros((2, 1)), np.array([0.0, 1.0]), 2.0)
    lo, hi = g.envelopes(np.array([[0.25]]), np.array([[0.0]]))
    assert lo[0, 0] == pytest.approx(-0.5)
    assert hi[0, 0] == pytest.approx(0.5)
    assert central_interpolate(g, (0.25, 0.0))[0] == pytest.approx(0.0)


def test_max_slope_is_smallest_consistent_constant():
    s = np.array([[0.0], [1.0], [3.0]])
    a = np.zeros((3, 1))
    v = np.array([0.0, 2.0, 3.0])
    assert max_slope(s, a, v)[0] == pytest.approx(2.0)
    assert max_slope(s, a, np.ones(3))[0] == pytest.approx(1e-12)


def test_covering_radius_of_uniform_grid():
    grid = np.linspace(0, 1, 5)
    probe = np.linspace(0, 1, 1001)
    r = covering_radius(grid, np.zeros(5), probe, np.zeros(1001))
    assert r == pytest.approx(0.125)


def test_roundtrip_dict():
    rng = np.random.default_rng(0)
    g = GridInterpolant(rng.normal(size=(6, 1)), rng.normal(size=(6, 1)), rng.normal(size=(6, 2)), [1.5, 2.5],
                        ProductMetric("l2", 0.5))
    back = GridInterpolant.from_dict(g.to_dict())
    q = rng.normal(size=(10, 1))
    np.testing.assert_array_equal(back(q, q), g(q, q))


@st.composite
def lipschitz_data(draw):
    n = draw(st.integers(1, 12))
    L = draw(st.floats(0.1, 10))
    nodes = np.array(draw(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=n, max_size=n)))
    # an L-Lipschitz function in l1: sum of L-scaled distance cones
    centres = np.array(draw(st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=3)))
    signs = np.array(draw(st.lists(st.sampled_from([-1.0, 1.0]), min_size=len(centres), max_size=len(centres))))
    return nodes, L, centres, signs / len(centres)


def _cone(p, centres, signs, L):
    d = np.abs(p[:, None, 0] - centres[None, :, 0]) + np.abs(p[:, None, 1] - centres[None, :, 1])
    return L * (d * signs).sum(axis=1)


@settings(max_examples=80, deadline=None)
@given(lipschitz_data(), st.lists(st.tuples(st.floats(-4, 4), st.floats(-4, 4)), min_size=2, max_size=20))
def test_interpolant_properties(data, queries):
    nodes, L, centres, signs = data
    f = _cone(nodes, centres, signs, L)
    g = GridInterpolant(nodes[:, :1], nodes[:, 1:], f, L, ProductMetric("l1"))
    q = np.array(queries)
    iq = g(q[:, :1], q[:, 1:])[:, 0]
    # reproduction
    np.testing.assert_allclose(g(nodes[:, :1], nodes[:, 1:])[:, 0], f, atol=1e-12)
    # error bounded by L times distance to the nearest node
    d = ProductMetric("l1").pairwise(q[:, :1], q[:, 1:], nodes[:, :1], nodes[:, 1:]).min(axis=1)
    assert np.all(np.abs(iq - _cone(q, centres, signs, L)) <= L * d + 1e-9)
    # the interpolant itself is L-Lipschitz
    dq = ProductMetric("l1").pairwise(q[:, :1], q[:, 1:], q[:, :1], q[:, 1:])
    diff = np.abs(iq[:, None] - iq[None, :])
    assert np.all(diff <= L * dq * (1 + 1e-9) + 1e-12)
