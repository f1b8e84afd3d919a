"""Score-function martingales for Gaussian transition kernels.

For ``p(y | x, a) = N(mu(x, a), sigma^2)`` in one dimension and a smooth
bounded ``phi`` with bounded derivative,

    m_phi(y) = phi(y) d/dy log p(y | x, a) + phi'(y)

integrates to zero against ``p`` (integration by parts).  The vector-field
basis is ``{1, sin(j u), cos(j u)}`` in the standardised coordinate
``u = (y - mu) / sigma``; coefficients are fitted by damped least squares on
a grid of ``(x, a)`` and carried to other points by central interpolation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .interpolation import GridInterpolant, max_slope, product_grid
from .mdp import MdpModel, ModelError, ProductMetric
from .rng import stream

Array = np.ndarray

DAMPING = 1e-10
COND_LIMIT = 1e12


@dataclass(frozen=True)
class TrigFieldBasis:
    """``phi_0 = 1`` and ``sin(j u), cos(j u)`` for ``j = 1..J``."""

    J: int = 1

    @property
    def size(self) -> int:
        return 1 + 2 * self.J

    def martingale_functions(self, u: Array, sigma: float) -> Array:
        """``m_{phi_k}`` at standardised points ``u``, shape ``(n, size)``."""
        u = np.asarray(u, float).ravel()
        cols = [-u / sigma]
        for j in range(1, self.J + 1):
            s, c = np.sin(j * u), np.cos(j * u)
            cols.append((-u * s + j * c) / sigma)
            cols.append((-u * c - j * s) / sigma)
        return np.stack(cols, axis=1)


def _require_gaussian(model: MdpModel):
    if model.gaussian_kernel is None or model.states.dim != 1:
        raise ModelError("score martingales need a 1-d model with a declared Gaussian kernel")
    return model.gaussian_kernel


@dataclass(frozen=True, eq=False)
class ScoreMartingale:
    model: MdpModel
    phi_basis: TrigFieldBasis
    stages: Sequence[GridInterpolant]
    M: int
    seed: int
    singular: list = field(default_factory=list)

    def functions(self, t: int, x: Array, a: Array, y: Array) -> Array:
        mean_fn, sigma = _require_gaussian(self.model)
        u = (np.asarray(y, float)[:, 0] - mean_fn(t + 1, x, a)) / sigma
        return self.phi_basis.martingale_functions(u, sigma)

    def penalty(self, t: int, x: Array, a: Array, eps: Array, x_next: Optional[Array] = None) -> Array:
        if x_next is None:
            x_next = self.model.kernel(t + 1, x, a, eps)
        c = self.stages[t](x, a)
        return np.sum(c * self.functions(t, x, a, x_next), axis=1)


def fit_coefficients(B: Array, v: Array) -> tuple[Array, bool]:
    """Damped normal equations ``(B'B/M + lambda I) c = B'v/M``.

    Returns zeros and ``True`` when the undamped Gram matrix is ill-conditioned.
    """
    M = B.shape[0]
    G = B.T @ B / M
    if not np.isfinite(G).all() or np.linalg.cond(G) > COND_LIMIT:
        return np.zeros(B.shape[1]), True
    return np.linalg.solve(G + DAMPING * np.eye(B.shape[1]), B.T @ v / M), False


def fit_score_martingale(model: MdpModel, phi_basis: TrigFieldBasis, estimates, grids, M: int,
                         seed: int, lipschitz: Union[float, str] = "max-slope",
                         metric: Optional[ProductMetric] = None) -> ScoreMartingale:
    """Least-squares fit of ``V_{t+1}`` on ``span{m_phi_k}`` at each grid node, every stage."""
    mean_fn, sigma = _require_gaussian(model)
    if M < 1:
        raise ValueError("M must be >= 1")
    metric = metric or model.metric
    stages, singular = [], []
    for t in range(model.horizon):
        gs, ga = grids if isinstance(grids, tuple) else grids[t]
        xs, acts = product_grid(gs, ga)
        eps = model.noise.sample(stream(seed, "score", t), M)
        coeffs = np.empty((xs.shape[0], phi_basis.size))
        for l in range(xs.shape[0]):
            X = np.repeat(xs[l:l + 1], M, axis=0)
            A = np.repeat(acts[l:l + 1], M, axis=0)
            Y = model.kernel(t + 1, X, A, eps)
            u = (Y[:, 0] - mean_fn(t + 1, X, A)) / sigma
            coeffs[l], bad = fit_coefficients(phi_basis.martingale_functions(u, sigma), estimates[t + 1](Y))
            if bad:
                singular.append((t, l))
        lip = max_slope(xs, acts, coeffs, metric) if isinstance(lipschitz, str) else lipschitz
        stages.append(GridInterpolant(xs, acts, coeffs, lip, metric))
    return ScoreMartingale(model, phi_basis, stages, M, seed, singular)
