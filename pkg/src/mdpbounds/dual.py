"""Martingale penalty families for the dual (upper) bound.

A penalty family exposes ``penalty(t, x, a, eps, x_next)`` for ``t = 0..H-1``:
the increment ``xi_{t+1}`` charged when action ``a`` is taken in state ``x`` at
stage ``t`` and the noise ``eps = eps_{t+1}`` moves the state to ``x_next``.
Every family here has zero conditional mean in ``eps`` for each fixed
``(x, a)``, which is all the weak-duality bound needs.

:class:`DualMartingale` is the regression-built family
``eta(x, a, eps) = sum_k c_k(x, a) psi_k(eps)`` whose coefficients are
estimated on a grid and extended by central Lipschitz interpolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .basis import NoiseBasis, noise_basis_from_description
from .interpolation import GridInterpolant, max_slope, product_grid
from .mdp import ExactSolution, MdpModel, NotEnumerableError, ProductMetric, as_points
from .primal import ValueFunctionEstimate
from .rng import compensated_mean, stream

Array = np.ndarray

SCHEMA_VERSION = 1

# Grid nodes per block when evaluating V_{t+1} on the noise sample.
_NODE_BLOCK = 64


def dual_noise_block(model: MdpModel, t: int, M: int, seed: int) -> Array:
    """The ``M`` inner draws for stage ``t``, shared by every grid node."""
    return model.noise.sample(stream(seed, "dual", t), M)


def _coefficients(model: MdpModel, v_next, basis: NoiseBasis, t: int, xs: Array, acts: Array,
                  eps: Array, weights: Optional[Array] = None) -> Array:
    """``c[l] = sum_m w_m V(K_{t+1}(x_l, a_l, eps_m)) Sigma_E^{-1} psi(eps_m)``, shape ``(L, K)``.

    Without weights this is the plain sample mean, summed exactly.
    """
    psi = basis.sigma_inverse_apply(basis.evaluate(eps))  # (M, K)
    M = eps.shape[0]
    L = xs.shape[0]
    out = np.empty((L, basis.K))
    for start in range(0, L, _NODE_BLOCK):
        stop = min(start + _NODE_BLOCK, L)
        b = stop - start
        y = model.kernel(t + 1, np.repeat(xs[start:stop], M, axis=0), np.repeat(acts[start:stop], M, axis=0),
                         np.tile(eps, (b, 1)))
        vals = np.asarray(v_next(y), float).reshape(b, M)
        if weights is None:
            for r in range(b):
                out[start + r] = compensated_mean(vals[r][:, None] * psi)
        else:
            out[start:stop] = (vals * weights) @ psi
    return out


def estimate_dual_coeffs(model: MdpModel, v_next, noise_basis: NoiseBasis, x, a, t: int, M: int,
                         seed: int) -> Array:
    """``c_{K,M}(x, a)`` from the stage-``t`` noise block."""
    if M < 1:
        raise ValueError("M must be >= 1")
    x = as_points(x, model.states.dim)[:1]
    a = as_points(a, model.actions.dim)[:1]
    eps = dual_noise_block(model, t, M, seed)
    return _coefficients(model, v_next, noise_basis, t, x, a, eps)[0]


def exact_dual_coeffs(model: MdpModel, v_next, noise_basis: NoiseBasis, xs, acts, t: int) -> Array:
    """Population coefficients ``c_bar_K`` on a finite noise law by exhaustive enumeration."""
    eps, probs = model.noise.enumerate()
    xs = as_points(xs, model.states.dim)
    acts = as_points(acts, model.actions.dim)
    return _coefficients(model, v_next, noise_basis, t, xs, acts, eps, probs)


@dataclass(frozen=True, eq=False)
class DualMartingale:
    """Interpolated noise-basis martingale ``eta~_{t+1}`` for ``t = 0..H-1``."""

    noise_basis: NoiseBasis
    stages: Sequence[GridInterpolant]
    M: Optional[int]
    lipschitz_mode: str = "fixed"
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return len(self.stages)

    def coefficients(self, t: int, x: Array, a: Array) -> Array:
        return self.stages[t](x, a)

    def penalty(self, t: int, x: Array, a: Array, eps: Array, x_next: Optional[Array] = None) -> Array:
        c = self.stages[t](x, a)
        return np.sum(c * self.noise_basis.evaluate(eps), axis=1)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "noise-basis",
            "noise_basis": self.noise_basis.describe(),
            "M": self.M,
            "lipschitz_mode": self.lipschitz_mode,
            "seed": self.seed,
            "meta": self.meta,
            "stages": [g.to_dict() for g in self.stages],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DualMartingale":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported dual schema version {d.get('schema_version')!r}")
        return cls(noise_basis_from_description(d["noise_basis"]),
                   [GridInterpolant.from_dict(g) for g in d["stages"]],
                   d["M"], d["lipschitz_mode"], d["seed"], d.get("meta", {}))

    @classmethod
    def from_json(cls, text: str) -> "DualMartingale":
        return cls.from_dict(json.loads(text))


class ZeroPenalty:
    """``xi = 0``: the plain perfect-information relaxation."""

    def penalty(self, t, x, a, eps, x_next=None) -> Array:
        return np.zeros(np.asarray(x).shape[0])


class ExactPenalty:
    """``xi*_{t+1} = V*_{t+1}(x_next) - E[V*_{t+1}(K_{t+1}(x, a, eps'))]`` on a finite model."""

    def __init__(self, model: MdpModel, exact: ExactSolution):
        if not model.noise.enumerable:
            raise NotEnumerableError("the optimal penalty needs enumerable noise")
        self.model = model
        self.exact = exact
        # E[V*_{t+1} | x, a] for every (t, x, a)
        self._means = np.stack([exact.transitions[t] @ exact.values[t + 1] for t in range(model.horizon)])

    def penalty(self, t, x, a, eps, x_next=None) -> Array:
        if x_next is None:
            x_next = self.model.kernel(t + 1, x, a, eps)
        ix = self.model.states.index_of(x)
        ia = self.model.actions.index_of(a)
        return self.exact.values[t + 1][self.model.states.index_of(x_next)] - self._means[t][ix, ia]


def exact_dual_from_oracle(model: MdpModel, exact: ExactSolution) -> ExactPenalty:
    return ExactPenalty(model, exact)


GridSpec = Union[tuple[Array, Array], Sequence[tuple[Array, Array]]]


def _stage_grid(grids, t: int) -> tuple[Array, Array]:
    if isinstance(grids, tuple) and len(grids) == 2 and not isinstance(grids[0], tuple):
        return grids
    return grids[t]


def theory_lipschitz(model: MdpModel, state_basis, noise_basis: NoiseBasis) -> float:
    """``L_{V,K_pr} L_K Lambda_{E,K}``: a priori Lipschitz constant of the coefficient functions."""
    from .primal import lipschitz_bound

    return lipschitz_bound(model, state_basis) * model.lipschitz_kernel * noise_basis.lambda_bound


def build_dual_martingale(model: MdpModel, estimates: Sequence[ValueFunctionEstimate], noise_basis: NoiseBasis,
                          grids: GridSpec, M: Optional[int], lipschitz: Union[float, str], seed: int,
                          exact: bool = False, metric: Optional[ProductMetric] = None) -> DualMartingale:
    """Fit ``c_{K,M}`` on each stage grid and wrap it in a central interpolant.

    ``grids`` is one ``(S_L, A_L)`` pair used at every stage or a list with one
    pair per stage; nodes are the product ``S_L x A_L``.  ``lipschitz`` is a
    positive constant or ``"max-slope"`` (estimated per coefficient from the
    grid data).  ``exact=True`` replaces the inner Monte Carlo by exhaustive
    enumeration of a finite noise law.
    """
    if not exact and (M is None or M < 1):
        raise ValueError("M must be >= 1")
    if isinstance(lipschitz, str):
        if lipschitz != "max-slope":
            raise ValueError(f"unknown lipschitz mode {lipschitz!r}")
    elif lipschitz <= 0:
        raise ValueError("interpolation Lipschitz constant must be positive")
    metric = metric or model.metric
    stages = []
    for t in range(model.horizon):
        gs, ga = _stage_grid(grids, t)
        xs, acts = product_grid(gs, ga)
        if xs.shape[0] == 0:
            raise ValueError(f"empty grid at stage {t}")
        if exact:
            c = exact_dual_coeffs(model, estimates[t + 1], noise_basis, xs, acts, t)
        else:
            c = _coefficients(model, estimates[t + 1], noise_basis, t, xs, acts, dual_noise_block(model, t, M, seed))
        lip = max_slope(xs, acts, c, metric) if isinstance(lipschitz, str) else lipschitz
        stages.append(GridInterpolant(xs, acts, c, lip, metric))
    mode = lipschitz if isinstance(lipschitz, str) else "fixed"
    return DualMartingale(noise_basis, stages, None if exact else M, mode, seed,
                          {"exact_inner": exact})


# --------------------------------------------------------------------------
# audit


def conditional_means(model: MdpModel, family, t: int, xs: Array, acts: Array, nodes: int = 64) -> Array:
    """``E_eps[xi_{t+1}(x, a, eps)]`` at each row, by exact sum or Gauss-Hermite quadrature."""
    xs = as_points(xs, model.states.dim)
    acts = as_points(acts, model.actions.dim)
    if model.noise.enumerable:
        eps, w = model.noise.enumerate()
    else:
        eps, w = model.noise.quadrature(nodes)
    n, q = xs.shape[0], eps.shape[0]
    X = np.repeat(xs, q, axis=0)
    A = np.repeat(acts, q, axis=0)
    E = np.tile(eps, (n, 1))
    Y = model.kernel(t + 1, X, A, E)
    vals = np.asarray(family.penalty(t, X, A, E, Y), float).reshape(n, q)
    return vals @ w


def zero_mean_audit(model: MdpModel, family, xs: Array, acts: Array, nodes: int = 64) -> float:
    """Largest ``|E_eps[xi_{t+1}]|`` over all stages and the given rows."""
    worst = 0.0
    for t in range(model.horizon):
        worst = max(worst, float(np.max(np.abs(conditional_means(model, family, t, xs, acts, nodes)))))
    return worst


def noise_basis_mean_error(noise_basis: NoiseBasis, noise, nodes: int = 64) -> float:
    """``max_k |E psi_k|`` by exact sum (finite law) or quadrature (Gaussian)."""
    eps, w = noise.enumerate() if noise.enumerable else noise.quadrature(nodes)
    return float(np.max(np.abs(w @ noise_basis.evaluate(eps))))
