"""Backward pseudo-regression for lower-biased value functions.

At stage ``h`` one block ``(X_i, eps_i)``, ``X_i ~ mu_h``, is drawn and
shared by every evaluation action.  The continuation coefficients are plain
sample means

    beta_a = mean_i  V_{h+1}(K_{h+1}(X_i, a, eps_i)) * Sigma^{-1} gamma(X_i)

so no empirical covariance matrix is ever inverted.  The continuation value
is clipped at ``(H - h) r_max`` before the max over actions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import StateBasis
from .mdp import MdpModel, Policy, as_points
from .rng import compensated_mean, mean_and_stderr, stream

Array = np.ndarray


def clip(v, level: float):
    """Saturate ``v`` to ``[-level, level]``."""
    if level < 0:
        raise ValueError(f"clipping level must be non-negative, got {level}")
    out = np.minimum(level, np.maximum(-level, v))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class ValueFunctionEstimate:
    """``V_{h,N}``; the terminal stage carries no coefficients and returns ``F``."""

    model: MdpModel
    stage: int
    basis: Optional[StateBasis] = None
    coeffs: Optional[Array] = None  # (n_actions, K)
    diagnostics: Optional[dict] = None

    @property
    def is_terminal(self) -> bool:
        return self.stage == self.model.horizon

    @property
    def continuation_clip(self) -> float:
        """``L~_{h+1} = (H - h) r_max``."""
        return self.model.clip_level(self.stage + 1)

    def continuation(self, x: Array) -> Array:
        """Clipped regression estimate of ``P_{h+1}^a V_{h+1}(x)`` for every action, ``(n, |A|)``."""
        g = self.basis.evaluate(self.stage, x)
        return clip(g @ self.coeffs.T, self.continuation_clip)

    def q_values(self, x: Array) -> Array:
        x = np.asarray(x, dtype=float)
        grid = self.model.action_grid
        n, m = x.shape[0], grid.shape[0]
        cont = self.continuation(x)
        r = self.model.reward(self.stage, np.repeat(x, m, axis=0), np.tile(grid, (n, 1))).reshape(n, m)
        return r + cont

    def __call__(self, x) -> Array:
        x = as_points(x, self.model.states.dim)
        if self.is_terminal:
            return self.model.terminal(x)
        return np.max(self.q_values(x), axis=1)

    def greedy_index(self, x) -> Array:
        """Lowest-index maximiser of the estimated Q-values."""
        x = as_points(x, self.model.states.dim)
        return np.argmax(self.q_values(x), axis=1)


def _next_values(model: MdpModel, h: int, v_next, X: Array, eps: Array) -> Array:
    """``Z[i, j] = V_{h+1}(K_{h+1}(X_i, a_j, eps_i))`` for the whole action grid."""
    grid = model.action_grid
    n, m = X.shape[0], grid.shape[0]
    Y = model.kernel(h + 1, np.repeat(X, m, axis=0), np.tile(grid, (n, 1)), np.repeat(eps, m, axis=0))
    return v_next(Y).reshape(n, m)


def draw_block(model: MdpModel, mu, h: int, N: int, seed: int) -> tuple[Array, Array]:
    """The stage-``h`` regression sample ``(X_i, eps_i)``, ``i < N``."""
    rng = stream(seed, "primal", h)
    X = mu.sample(h, rng, N)
    eps = model.noise.sample(rng, N)
    return X, eps


def regression_coefficients(basis: StateBasis, h: int, X: Array, Z: Array) -> Array:
    """``beta[j] = mean_i Z[i, j] * Sigma^{-1} gamma(X_i)`` with exact summation, shape ``(m, K)``."""
    U = basis.sigma_inverse_apply(h, basis.evaluate(h, X))  # (N, K)
    return np.stack([compensated_mean(Z[:, j, None] * U) for j in range(Z.shape[1])])


def estimate_beta(basis: StateBasis, mu, model: MdpModel, v_next, a, N: int, seed: int, h: int) -> Array:
    """Coefficients for a single action ``a`` (one entry of the shared-block estimate)."""
    if N < 1:
        raise ValueError("N must be >= 1")
    a = as_points(a, model.actions.dim)[:1]
    X, eps = draw_block(model, mu, h, N, seed)
    Y = model.kernel(h + 1, X, np.repeat(a, N, axis=0), eps)
    Z = v_next(Y).reshape(N, 1)
    return regression_coefficients(basis, h, X, Z)[0]


def backward_pass(model: MdpModel, basis: StateBasis, mu, N: int, seed: int) -> list[ValueFunctionEstimate]:
    """``[V_{0,N}, ..., V_{H,N}]`` (indexed by stage) from fresh blocks per stage."""
    if N < 1:
        raise ValueError("N must be >= 1")
    H = model.horizon
    estimates: list[Optional[ValueFunctionEstimate]] = [None] * (H + 1)
    estimates[H] = ValueFunctionEstimate(model, H)
    for h in range(H - 1, -1, -1):
        X, eps = draw_block(model, mu, h, N, seed)
        Z = _next_values(model, h, estimates[h + 1], X, eps)
        beta = regression_coefficients(basis, h, X, Z)
        raw = basis.evaluate(h, X) @ beta.T
        level = model.clip_level(h + 1)
        diag = {
            "stage": h,
            "coeff_norms": np.linalg.norm(beta, axis=1).tolist(),
            "clip_level": level,
            "clip_rate": float(np.mean(np.abs(raw) > level)),
        }
        estimates[h] = ValueFunctionEstimate(model, h, basis, beta, diag)
    return estimates


def mc_root_value(model: MdpModel, v1: ValueFunctionEstimate, x0, N: int, seed: int) -> float:
    """Plain Monte Carlo replacement of the last step, ``V_0(x0)`` only."""
    x0 = as_points(x0, model.states.dim)[:1]
    eps = model.noise.sample(stream(seed, "primal-root"), N)
    X = np.repeat(x0, N, axis=0)
    Z = _next_values(model, 0, v1, X, eps)
    grid = model.action_grid
    cont = np.array([mean_and_stderr(Z[:, j])[0] for j in range(grid.shape[0])])
    r = model.reward(0, np.repeat(x0, grid.shape[0], axis=0), grid)
    return float(np.max(r + cont))


class GreedyPolicy(Policy):
    """``pi_{h,N}(x) = argmax_a [R_h(x,a) + clip(beta_a . gamma(x))]``, lowest index on ties."""

    def __init__(self, estimates: list[ValueFunctionEstimate]):
        self.estimates = estimates
        self.model = estimates[0].model
        self.horizon = self.model.horizon
        if len(estimates) != self.horizon + 1:
            raise ValueError("estimates must cover stages 0..H")

    def index(self, h: int, x: Array) -> Array:
        return self.estimates[h].greedy_index(x)

    def __call__(self, h: int, x: Array) -> Array:
        return self.model.action_grid[self.index(h, x)]


def greedy_policy(estimates: list[ValueFunctionEstimate]) -> GreedyPolicy:
    return GreedyPolicy(estimates)


def diagnostics(estimates: list[ValueFunctionEstimate]) -> list[dict]:
    """Per-stage coefficient norms and clipping activation rates."""
    return [e.diagnostics for e in estimates if e.diagnostics is not None]


def lipschitz_bound(model: MdpModel, basis) -> float:
    """``L_R + V*_max Lambda_K sqrt(K) L_gamma``, the Lipschitz constant of every ``V_{h,N}``."""
    lg = basis.lipschitz_bound if hasattr(basis, "lipschitz_bound") else 0.0
    return model.lipschitz_reward + model.v_max * basis.lambda_bound * math.sqrt(basis.K) * lg
