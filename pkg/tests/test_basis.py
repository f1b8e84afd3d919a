import math

import numpy as np
import pytest

from mdpbounds.basis import (BasisError, GaussianReferenceMeasure, HermiteNoiseBasis, HermiteStateBasis,
                             IndicatorNoiseBasis, IndicatorStateBasis, hermite_table, make_indicator_bases,
                             noise_basis_from_description)
from mdpbounds.mdp import FiniteNoise, FiniteSpace


def test_hermite_orthonormal_under_gaussian():
    z, w = np.polynomial.hermite_e.hermegauss(60)
    w = w / w.sum()
    T = hermite_table(z, 8)
    np.testing.assert_allclose(T.T @ (w[:, None] * T), np.eye(8), atol=1e-12)


def test_hermite_matches_closed_forms():
    z = np.linspace(-3, 3, 7)
    T = hermite_table(z, 4)
    np.testing.assert_allclose(T[:, 0], 1.0)
    np.testing.assert_allclose(T[:, 1], z)
    np.testing.assert_allclose(T[:, 2], (z**2 - 1) / math.sqrt(2))
    np.testing.assert_allclose(T[:, 3], (z**3 - 3 * z) / math.sqrt(6))


def test_state_basis_covariance_identity_under_stage_measure():
    mu = GaussianReferenceMeasure(3)
    basis = HermiteStateBasis(6, mu)
    for h in range(3):
        x, w = mu.quadrature(h, 60)
        G = basis.evaluate(h, x)
        np.testing.assert_allclose(G.T @ (w[:, None] * G), basis.covariance(h), atol=1e-12)


def test_reference_variance_grows_with_stage():
    mu = GaussianReferenceMeasure(4)
    assert mu.variance(0) == pytest.approx(1 / 8)
    assert mu.variance(3) == pytest.approx(4 / 8)
    with pytest.raises(BasisError):
        GaussianReferenceMeasure(3, alpha=0.0)


def test_lambda_bound_is_sup_on_domain():
    basis = HermiteNoiseBasis(3, domain_bound=6.0)
    z = np.linspace(-6, 6, 200001)
    assert basis.lambda_bound == pytest.approx(np.max(np.abs(basis.evaluate(z))), rel=1e-9)


def test_indicator_state_basis_orthonormal():
    space = FiniteSpace([0.0, 1.0, 2.0])
    p = np.array([0.2, 0.5, 0.3])
    basis = IndicatorStateBasis(space, p)
    G = basis.evaluate(0, space.points)
    np.testing.assert_allclose(G.T @ (p[:, None] * G), np.eye(3), atol=1e-15)
    assert np.all(basis.evaluate(0, [[7.0]]) == 0.0)


def test_zero_probability_atom_rejected():
    with pytest.raises(BasisError):
        IndicatorStateBasis(FiniteSpace([0.0, 1.0]), [1.0, 0.0])
    with pytest.raises(BasisError):
        IndicatorNoiseBasis(FiniteNoise([0.0, 1.0], [1.0, 0.0]))


def test_single_atom_noise_has_no_basis():
    with pytest.raises(BasisError):
        IndicatorNoiseBasis(FiniteNoise([0.0], [1.0]))


def test_two_point_noise_basis_is_eps():
    nb = IndicatorNoiseBasis(FiniteNoise([-1.0, 1.0], [0.5, 0.5]))
    np.testing.assert_allclose(nb.evaluate(np.array([[-1.0], [1.0]]))[:, 0], [-1.0, 1.0], atol=1e-15)


@pytest.mark.parametrize("probs", [[0.5, 0.5], [0.2, 0.3, 0.5], [0.1, 0.1, 0.1, 0.7]])
def test_indicator_noise_basis_whitened_and_centred(probs):
    vals = np.arange(len(probs), dtype=float)
    noise = FiniteNoise(vals, probs)
    nb = make_indicator_bases(noise)
    P = nb.evaluate(vals.reshape(-1, 1))
    w = np.asarray(probs)
    np.testing.assert_allclose(w @ P, 0.0, atol=1e-15)
    np.testing.assert_allclose(P.T @ (w[:, None] * P), np.eye(len(probs) - 1), atol=1e-12)
    with pytest.raises(BasisError):
        nb.evaluate(np.array([[0.5]]))


def test_noise_basis_description_roundtrip():
    for nb in (HermiteNoiseBasis(4, 5.0), IndicatorNoiseBasis(FiniteNoise([0.0, 1.0, 3.0], [0.2, 0.3, 0.5]))):
        back = noise_basis_from_description(nb.describe())
        e = np.array([[0.0], [1.0], [3.0]])
        np.testing.assert_array_equal(back.evaluate(e), nb.evaluate(e))


def test_basis_size_validation():
    with pytest.raises(BasisError):
        HermiteNoiseBasis(0)
    with pytest.raises(BasisError):
        HermiteStateBasis(0, GaussianReferenceMeasure(2))
