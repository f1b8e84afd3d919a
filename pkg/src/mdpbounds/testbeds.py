"""Shipped testbeds.

``chain``          finite chain, two actions, two-point noise (exact oracle)
``gaussian``       1-d controlled random walk ``x + a*drift + sigma*eps`` with
                   clipped quadratic rewards (continuous states, dense-grid oracle)
``deterministic``  finite chain whose kernel ignores the noise
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from .basis import (ConstantStateBasis, FiniteReferenceMeasure, GaussianReferenceMeasure, HermiteNoiseBasis,
                    HermiteStateBasis, IndicatorNoiseBasis, IndicatorStateBasis)
from .mdp import (BoxSpace, FiniteNoise, FiniteSpace, GaussianNoise, MdpModel, ProductMetric, solve_exact,
                  uniform_action_grid)

Array = np.ndarray

TWO_POINT = FiniteNoise([-1.0, 1.0], [0.5, 0.5])
DEGENERATE = FiniteNoise([0.0], [1.0])

_CHAIN_LEVELS = {2: [0.1, 1.0], 3: [0.2, 1.0, 0.5]}
ACTION_COST = 0.3


def chain_levels(n_states: int) -> Array:
    if n_states in _CHAIN_LEVELS:
        return np.array(_CHAIN_LEVELS[n_states])
    i = np.arange(n_states)
    return 0.5 + 0.5 * np.sin(2.0 * i + 0.7)


def _level_reward(levels: Array):
    def reward(h, x, a):
        return levels[x[:, 0].astype(np.int64)] - ACTION_COST * a[:, 0]

    def terminal(x):
        return levels[x[:, 0].astype(np.int64)]

    lip = float(np.max(np.abs(np.diff(levels)))) if levels.size > 1 else 0.0
    return reward, terminal, lip


def chain_model(horizon: int = 4, n_states: int = 3) -> MdpModel:
    """``K(x, a, eps) = clamp(x + a + eps, 0, n - 1)``, ``a in {0, 1}``, ``eps = +-1``."""
    levels = chain_levels(n_states)
    top = n_states - 1

    def kernel(t, x, a, eps):
        return np.clip(x + a + eps, 0.0, top)

    reward, terminal, lip = _level_reward(levels)
    return MdpModel(horizon, FiniteSpace(np.arange(n_states, dtype=float)), FiniteSpace([0.0, 1.0]), TWO_POINT,
                    kernel, reward, terminal, r_max=1.0, lipschitz_reward=lip, lipschitz_kernel=1.0,
                    metric=ProductMetric("l1"), name=f"chain{n_states}")


def deterministic_model(horizon: int = 4, n_states: int = 3, degenerate_noise: bool = False) -> MdpModel:
    """Finite chain moving left (``a = 0``) or right (``a = 1``) regardless of the noise."""
    levels = chain_levels(n_states)
    top = n_states - 1

    def kernel(t, x, a, eps):
        return np.clip(x + 2.0 * a - 1.0, 0.0, top)

    reward, terminal, lip = _level_reward(levels)
    return MdpModel(horizon, FiniteSpace(np.arange(n_states, dtype=float)), FiniteSpace([0.0, 1.0]),
                    DEGENERATE if degenerate_noise else TWO_POINT, kernel, reward, terminal, r_max=1.0,
                    lipschitz_reward=lip, lipschitz_kernel=2.0, metric=ProductMetric("l1"),
                    name="deterministic")


def gaussian_model(horizon: int = 3, drift: float = 0.5, sigma: float = 0.5, n_actions: int = 5) -> MdpModel:
    """``K(x, a, eps) = x + a drift + sigma eps`` on R with ``a`` in ``[-1, 1]``.

    ``R_h(x, a) = g(x)/2 - a^2/4`` and ``F = g`` with ``g(x) = clip(1 - x^2, -1, 1)``.
    """

    def g(x):
        return np.clip(1.0 - x[:, 0] ** 2, -1.0, 1.0)

    def kernel(t, x, a, eps):
        return x + drift * a + sigma * eps

    def reward(h, x, a):
        return 0.5 * g(x) - 0.25 * a[:, 0] ** 2

    def mean(t, x, a):
        return x[:, 0] + drift * a[:, 0]

    return MdpModel(horizon, BoxSpace(-np.inf, np.inf), uniform_action_grid(-1.0, 1.0, n_actions), GaussianNoise(1),
                    kernel, reward, g, r_max=1.0, lipschitz_reward=math.sqrt(2.0),
                    lipschitz_kernel=max(1.0, drift), metric=ProductMetric("l1"), name="gaussian",
                    gaussian_kernel=(mean, sigma))


# --------------------------------------------------------------------------
# dense-grid reference solution for 1-d continuous models


@dataclass(frozen=True, eq=False)
class DenseGridSolution:
    """``V*_h`` tabulated on a uniform grid, evaluated by linear interpolation."""

    xs: Array
    values: Array  # (H + 1, n)

    def value(self, h: int, x) -> Array:
        x = np.asarray(x, float)
        col = x[:, 0] if x.ndim == 2 else x
        return np.interp(col, self.xs, self.values[h])


def solve_dense_grid(model: MdpModel, half_width: float = 12.0, dx: float = 0.01, du: float = 0.005,
                     u_max: float = 8.0) -> DenseGridSolution:
    """Backward induction for a 1-d model with standard Gaussian noise.

    Expectations are trapezoid sums over ``u`` on ``[-u_max, u_max]`` of
    ``V_{h+1}(K(x, a, u)) phi(u)``; ``V_{h+1}`` is linearly interpolated and held
    constant beyond the grid.
    """
    xs = np.arange(-half_width, half_width + dx / 2, dx)
    u = np.arange(-u_max, u_max + du / 2, du)
    w = np.exp(-0.5 * u**2) * du
    w[0] *= 0.5
    w[-1] *= 0.5
    w /= w.sum()
    H = model.horizon
    X = xs.reshape(-1, 1)
    V = np.empty((H + 1, xs.size))
    V[H] = model.terminal(X)
    grid = model.action_grid
    for h in range(H - 1, -1, -1):
        best = np.full(xs.size, -np.inf)
        for a in grid:
            A = np.repeat(a.reshape(1, -1), xs.size, axis=0)
            Y = np.empty((xs.size, u.size))
            for j0 in range(0, u.size, 512):
                uj = u[j0:j0 + 512]
                nxt = model.kernel(h + 1, np.repeat(X, uj.size, axis=0), np.repeat(A, uj.size, axis=0),
                                   np.tile(uj, xs.size).reshape(-1, 1))
                Y[:, j0:j0 + 512] = nxt[:, 0].reshape(xs.size, uj.size)
            ev = np.interp(Y, xs, V[h + 1]) @ w
            best = np.maximum(best, model.reward(h, X, A) + ev)
        V[h] = best
    return DenseGridSolution(xs, V)


# --------------------------------------------------------------------------
# registry


@dataclass(frozen=True, eq=False)
class Testbed:
    """A model plus the default ingredients for running the full method on it."""

    __test__ = False

    id: str
    model: MdpModel
    x0: Array
    params: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return self.model.is_finite

    def reference_measure(self, alpha: Optional[float] = None):
        if self.finite:
            return FiniteReferenceMeasure(self.model.states)
        return GaussianReferenceMeasure(self.model.horizon, alpha)

    def state_basis(self, family: str, K: int, mu, domain_bound: float = 6.0):
        if family == "hermite":
            if self.finite:
                raise ValueError("hermite state basis needs a Gaussian reference measure")
            return HermiteStateBasis(K, mu, domain_bound)
        if family == "indicator":
            if not self.finite:
                raise ValueError("indicator state basis needs a finite state space")
            subset = None if K >= self.model.states.size else np.arange(K)
            return IndicatorStateBasis(self.model.states, mu.probs, subset)
        if family == "constant":
            return ConstantStateBasis()
        raise ValueError(f"unknown state basis family {family!r}")

    def noise_basis(self, family: str, K: int, domain_bound: float = 6.0):
        if family == "hermite":
            if self.model.noise.enumerable:
                raise ValueError("hermite noise basis needs Gaussian noise")
            return HermiteNoiseBasis(K, domain_bound)
        if family == "indicator":
            if not self.model.noise.enumerable:
                raise ValueError("indicator noise basis needs a finite noise law")
            return IndicatorNoiseBasis(self.model.noise)
        raise ValueError(f"unknown noise basis family {family!r}")

    def dual_grid(self, size: int, half_width: float = 3.0) -> tuple[Array, Array]:
        """``(S_L, A_L)``: the whole space when finite, else ``size`` uniform states."""
        if self.finite:
            return self.model.states.points, self.model.action_grid
        return np.linspace(-half_width, half_width, size).reshape(-1, 1), self.model.action_grid

    def oracle_value(self) -> float:
        """``V*_0(x0)``: exact on finite testbeds, dense-grid DP otherwise."""
        if self.finite:
            return solve_exact(self.model).value0(self.x0)
        return float(dense_solution(self).value(0, self.x0)[0])


@lru_cache(maxsize=8)
def _dense_cached(horizon: int, drift: float, sigma: float, n_actions: int) -> DenseGridSolution:
    return solve_dense_grid(gaussian_model(horizon, drift, sigma, n_actions))


def dense_solution(testbed: Testbed) -> DenseGridSolution:
    if testbed.id != "gaussian":
        raise ValueError("dense-grid reference is for the gaussian testbed")
    p = testbed.params
    return _dense_cached(testbed.model.horizon, p["drift"], p["sigma"], p["n_actions"])


TESTBEDS = ("chain", "gaussian", "deterministic")


def make_testbed(testbed_id: str, horizon: Optional[int] = None, n_states: int = 3, n_actions: int = 5,
                 drift: float = 0.5, sigma: float = 0.5, degenerate_noise: bool = False) -> Testbed:
    if testbed_id == "chain":
        model = chain_model(horizon or 4, n_states)
        return Testbed("chain", model, np.array([[0.0]]))
    if testbed_id == "gaussian":
        model = gaussian_model(horizon or 3, drift, sigma, n_actions)
        return Testbed("gaussian", model, np.array([[0.0]]),
                       {"drift": drift, "sigma": sigma, "n_actions": n_actions})
    if testbed_id == "deterministic":
        model = deterministic_model(horizon or 4, n_states, degenerate_noise)
        return Testbed("deterministic", model, np.array([[0.0]]))
    raise ValueError(f"unknown testbed {testbed_id!r}; choose from {TESTBEDS}")
