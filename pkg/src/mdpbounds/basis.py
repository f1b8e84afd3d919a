"""Basis systems with analytically known covariance.

State bases ``gamma_K`` are orthonormal under the stage-``h`` reference
measure, so ``Sigma_{h,K}`` is the identity and applying its inverse is a
no-op.  Noise bases ``psi_K`` are orthonormal and exactly zero-mean under
the noise law, which is what makes every penalty built from them a valid
martingale increment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mdp import FiniteNoise, FiniteSpace

Array = np.ndarray

DEFAULT_DOMAIN_BOUND = 6.0


class BasisError(ValueError):
    pass


def hermite_table(z: Array, n: int) -> Array:
    """Orthonormal probabilists' Hermite functions ``He_k(z)/sqrt(k!)``, ``k < n``.

    Three-term recurrence; returns shape ``(len(z), n)``.
    """
    z = np.asarray(z, dtype=float).ravel()
    out = np.empty((z.size, n))
    if n == 0:
        return out
    out[:, 0] = 1.0
    if n > 1:
        out[:, 1] = z
    for k in range(1, n - 1):
        out[:, k + 1] = (z * out[:, k] - math.sqrt(k) * out[:, k - 1]) / math.sqrt(k + 1)
    return out


def _hermite_sup_stats(degrees: range, bound: float, n_probe: int = 20001) -> tuple[float, float]:
    """Max of ``|h_k|`` and of ``|(h_k)'|_2`` over ``[-bound, bound]``."""
    z = np.linspace(-bound, bound, n_probe)
    top = max(degrees) + 1
    table = hermite_table(z, top + 1)
    values = table[:, list(degrees)]
    # h_k' = sqrt(k) h_{k-1}
    grads = np.stack([math.sqrt(k) * table[:, k - 1] if k > 0 else np.zeros_like(z) for k in degrees], axis=1)
    return float(np.max(np.abs(values))), float(np.max(np.sqrt(np.sum(grads**2, axis=1))))


# --------------------------------------------------------------------------
# reference measures


@dataclass(frozen=True)
class GaussianReferenceMeasure:
    """``mu_h = N(mean, (h + 1) / (2 alpha))`` on the real line."""

    horizon: int
    alpha: Optional[float] = None
    center: float = 0.0

    def __post_init__(self):
        if self.alpha is None:
            object.__setattr__(self, "alpha", float(self.horizon))
        if self.alpha <= 0:
            raise BasisError("alpha must be positive")

    def mean(self, h: int) -> float:
        return self.center

    def variance(self, h: int) -> float:
        return (h + 1) / (2.0 * self.alpha)

    def scale(self, h: int) -> float:
        return math.sqrt(self.variance(h))

    def sample(self, h: int, rng: np.random.Generator, n: int) -> Array:
        return self.center + self.scale(h) * rng.standard_normal((n, 1))

    def density(self, h: int, x) -> Array:
        x = np.asarray(x, dtype=float).reshape(-1)
        s = self.scale(h)
        return np.exp(-0.5 * ((x - self.center) / s) ** 2) / (s * math.sqrt(2 * math.pi))

    def quadrature(self, h: int, nodes: int = 64) -> tuple[Array, Array]:
        z, w = np.polynomial.hermite_e.hermegauss(nodes)
        return (self.center + self.scale(h) * z).reshape(-1, 1), w / w.sum()


@dataclass(frozen=True, eq=False)
class FiniteReferenceMeasure:
    """Stage-independent law on a finite state space (uniform by default)."""

    space: FiniteSpace
    probs: Optional[Array] = None

    def __post_init__(self):
        p = np.full(self.space.size, 1.0 / self.space.size) if self.probs is None else np.asarray(self.probs, float)
        if p.shape != (self.space.size,) or np.any(p < 0) or abs(p.sum() - 1) > 1e-12:
            raise BasisError("reference probabilities must be a probability vector over the space")
        object.__setattr__(self, "probs", p)

    def mean(self, h: int) -> Array:
        return self.probs @ self.space.points

    def variance(self, h: int) -> Array:
        m = self.mean(h)
        return self.probs @ (self.space.points - m) ** 2

    def sample(self, h: int, rng: np.random.Generator, n: int) -> Array:
        return self.space.points[rng.choice(self.space.size, size=n, p=self.probs)]

    def density(self, h: int, x) -> Array:
        idx = self.space.index_of(x)
        return self.probs[idx]


# --------------------------------------------------------------------------
# state bases


class StateBasis:
    """``gamma_K`` evaluated per stage; ``Sigma_{h,K}`` known in closed form."""

    K: int
    family: str

    def evaluate(self, h: int, x: Array) -> Array:  # pragma: no cover - interface
        raise NotImplementedError

    def covariance(self, h: int) -> Array:
        return np.eye(self.K)

    def sigma_inverse_apply(self, h: int, v: Array) -> Array:
        return v

    @property
    def lambda_bound(self) -> float:
        raise NotImplementedError

    @property
    def second_moment_bound(self) -> float:
        # orthonormal: E|gamma|^2 = K
        return math.sqrt(self.K)


class HermiteStateBasis(StateBasis):
    """Orthonormal Hermite system in the stage-``h`` standardised coordinate."""

    family = "hermite"

    def __init__(self, K: int, measure: GaussianReferenceMeasure, domain_bound: float = DEFAULT_DOMAIN_BOUND):
        if K < 1:
            raise BasisError("basis size K must be >= 1")
        self.K = K
        self.measure = measure
        self.domain_bound = domain_bound
        self._lam, self._dz = _hermite_sup_stats(range(K), domain_bound)

    def standardize(self, h: int, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        col = x[:, 0] if x.ndim == 2 else x
        return (col - self.measure.mean(h)) / self.measure.scale(h)

    def evaluate(self, h: int, x: Array) -> Array:
        return hermite_table(self.standardize(h, x), self.K)

    def domain(self, h: int) -> tuple[float, float]:
        m, s = self.measure.mean(h), self.measure.scale(h)
        return m - self.domain_bound * s, m + self.domain_bound * s

    @property
    def lambda_bound(self) -> float:
        """``sup |Sigma^{-1} gamma_K|_inf`` over the standardised domain."""
        return self._lam

    def lipschitz(self, h: int) -> float:
        """Lipschitz constant of ``x -> gamma_K(x)`` (Euclidean) on the stage-``h`` domain."""
        return self._dz / self.measure.scale(h)

    @property
    def lipschitz_bound(self) -> float:
        return max(self.lipschitz(h) for h in range(self.measure.horizon))

    def describe(self) -> dict:
        return {"family": self.family, "K": self.K, "domain_bound": self.domain_bound,
                "alpha": self.measure.alpha}


class IndicatorStateBasis(StateBasis):
    """``gamma_k(x) = 1{x = x_k} / sqrt(p_k)`` for a subset of the atoms.

    With all atoms the span contains every function on the space, so the
    regression reproduces conditional expectations exactly in the limit.
    Points outside the space evaluate to the zero vector.
    """

    family = "indicator"

    def __init__(self, space: FiniteSpace, probs=None, subset=None):
        self.space = space
        p = np.full(space.size, 1.0 / space.size) if probs is None else np.asarray(probs, float)
        if np.any(p <= 0):
            raise BasisError("zero-probability atom: indicator cannot be normalised")
        self.probs = p
        self.subset = np.arange(space.size) if subset is None else np.asarray(subset, dtype=np.int64)
        self.K = len(self.subset)
        if self.K < 1:
            raise BasisError("basis size K must be >= 1")
        self._col = np.full(space.size + 1, -1, dtype=np.int64)
        self._col[self.subset] = np.arange(self.K)
        self._scale = 1.0 / np.sqrt(p[self.subset])

    def evaluate(self, h: int, x: Array) -> Array:
        idx = self.space.locate(x)
        out = np.zeros((idx.size, self.K))
        col = self._col[idx]  # idx == -1 picks the trailing sentinel
        rows = np.nonzero(col >= 0)[0]
        out[rows, col[rows]] = self._scale[col[rows]]
        return out

    @property
    def lambda_bound(self) -> float:
        return float(np.max(1.0 / np.sqrt(self.probs[self.subset])))

    def describe(self) -> dict:
        return {"family": self.family, "K": self.K, "subset": self.subset.tolist()}


class ConstantStateBasis(StateBasis):
    """The single function ``gamma = 1``; ``Sigma = 1`` under every measure."""

    family = "constant"
    K = 1

    def evaluate(self, h: int, x: Array) -> Array:
        return np.ones((np.asarray(x).shape[0], 1))

    @property
    def lambda_bound(self) -> float:
        return 1.0

    def lipschitz(self, h: int) -> float:
        return 0.0

    def describe(self) -> dict:
        return {"family": self.family, "K": 1}


# --------------------------------------------------------------------------
# noise bases


class NoiseBasis:
    """Zero-mean ``psi_K`` with known covariance ``Sigma_{E,K}``."""

    K: int
    family: str

    def evaluate(self, eps: Array) -> Array:  # pragma: no cover - interface
        raise NotImplementedError

    def covariance(self) -> Array:
        return np.eye(self.K)

    def sigma_inverse_apply(self, v: Array) -> Array:
        return v

    @property
    def second_moment_bound(self) -> float:
        return math.sqrt(self.K)


class HermiteNoiseBasis(NoiseBasis):
    """``psi_k = He_k / sqrt(k!)``, ``k = 1..K``, for standard Gaussian noise."""

    family = "hermite"

    def __init__(self, K: int, domain_bound: float = DEFAULT_DOMAIN_BOUND):
        if K < 1:
            raise BasisError("basis size K must be >= 1")
        self.K = K
        self.domain_bound = domain_bound
        self._lam, _ = _hermite_sup_stats(range(1, K + 1), domain_bound)

    def evaluate(self, eps: Array) -> Array:
        e = np.asarray(eps, dtype=float)
        e = e[:, 0] if e.ndim == 2 else e
        return hermite_table(e, self.K + 1)[:, 1:]

    @property
    def lambda_bound(self) -> float:
        """``sup |psi_K|_inf`` over ``[-B, B]``; unbounded on the whole line."""
        return self._lam

    def describe(self) -> dict:
        return {"family": self.family, "K": self.K, "domain_bound": self.domain_bound}


class IndicatorNoiseBasis(NoiseBasis):
    """Whitened, centred atom indicators of a finite noise law.

    Uses atoms ``2..n`` (the first is dropped, the centred indicators of all
    ``n`` atoms being linearly dependent).  ``W = C^{-1/2}`` with
    ``C = diag(p') - p' p'^T`` makes ``Sigma_{E,K}`` the identity.
    """

    family = "indicator"

    def __init__(self, noise: FiniteNoise):
        vals, probs = noise.enumerate()
        if vals.shape[0] < 2:
            raise BasisError("single-atom noise admits no nonconstant zero-mean function")
        if np.any(probs <= 0):
            raise BasisError("zero-probability atom: indicator cannot be normalised")
        self.noise = noise
        self.K = vals.shape[0] - 1
        self._atoms = FiniteSpace(vals)
        p = probs[1:]
        C = np.diag(p) - np.outer(p, p)
        w, U = np.linalg.eigh(C)
        self.whitening = (U / np.sqrt(w)) @ U.T
        self._p = p
        table = self._raw(np.arange(vals.shape[0]))
        self._table = table
        self._lam = float(np.max(np.abs(table)))

    def _raw(self, idx: Array) -> Array:
        onehot = np.zeros((idx.size, self.K + 1))
        onehot[np.arange(idx.size), idx] = 1.0
        return (onehot[:, 1:] - self._p) @ self.whitening.T

    def evaluate(self, eps: Array) -> Array:
        idx = self._atoms.locate(eps)
        if np.any(idx < 0):
            raise BasisError("noise value is not an atom of the law")
        return self._table[idx]

    @property
    def lambda_bound(self) -> float:
        return self._lam

    def describe(self) -> dict:
        return {"family": self.family, "K": self.K,
                "values": self.noise.values.tolist(), "probs": self.noise.probs.tolist()}


# --------------------------------------------------------------------------
# factories


def make_hermite_state_basis(K: int, measure: GaussianReferenceMeasure,
                             domain_bound: float = DEFAULT_DOMAIN_BOUND) -> HermiteStateBasis:
    return HermiteStateBasis(K, measure, domain_bound)


def make_hermite_noise_basis(K: int, domain_bound: float = DEFAULT_DOMAIN_BOUND) -> HermiteNoiseBasis:
    return HermiteNoiseBasis(K, domain_bound)


def make_indicator_bases(space: FiniteSpace | FiniteNoise, probs=None):
    """Indicator basis for a finite state space or a finite noise law."""
    if isinstance(space, FiniteNoise):
        if probs is not None:
            space = FiniteNoise(space.values, probs)
        return IndicatorNoiseBasis(space)
    if isinstance(space, FiniteSpace):
        return IndicatorStateBasis(space, probs)
    raise BasisError(f"indicator bases need a finite space or noise law, got {type(space).__name__}")


def noise_basis_from_description(desc: dict) -> NoiseBasis:
    """Rebuild a noise basis from :meth:`describe` output."""
    if desc["family"] == "hermite":
        return HermiteNoiseBasis(int(desc["K"]), float(desc.get("domain_bound", DEFAULT_DOMAIN_BOUND)))
    if desc["family"] == "indicator":
        return IndicatorNoiseBasis(FiniteNoise(desc["values"], desc["probs"]))
    raise BasisError(f"unknown noise basis family {desc['family']!r}")
