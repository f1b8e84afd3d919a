"""Optimal central Lipschitz interpolation on scattered (state, action) nodes.

For nodes ``p_l`` with values ``f_l`` and a Lipschitz constant ``L``::

    H_low(p) = max_l f_l - L rho(p, p_l)
    H_up(p)  = min_l f_l + L rho(p, p_l)
    I[f](p)  = (H_low(p) + H_up(p)) / 2

Both envelopes are L-Lipschitz, hence so is ``I[f]``, and for every
L-Lipschitz ``f`` the error is at most ``L`` times the covering radius.
Several value columns can be interpolated at once, each with its own ``L``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mdp import ProductMetric

Array = np.ndarray

# Query rows processed per block: bounds the (rows, nodes, columns) temporaries.
_BLOCK = 4096


class InterpolationError(ValueError):
    pass


def _as_rows(p) -> Array:
    p = np.asarray(p, float)
    return p.reshape(-1, 1) if p.ndim <= 1 else p


@dataclass(frozen=True, eq=False)
class GridInterpolant:
    """Central interpolant of ``values[:, k]`` on nodes ``(states[l], actions[l])``.

    ``lipschitz`` is a scalar or one constant per value column.  With
    ``snap=True`` a query that coincides with a node returns the stored value
    (identical to the central interpolant when the data are L-consistent).
    """

    states: Array
    actions: Array
    values: Array
    lipschitz: Array
    metric: ProductMetric = ProductMetric()
    snap: bool = True

    def __post_init__(self):
        s = _as_rows(self.states)
        a = _as_rows(self.actions)
        v = np.asarray(self.values, float)
        if v.ndim == 1:
            v = v[:, None]
        if s.shape[0] == 0:
            raise InterpolationError("empty grid")
        if not (s.shape[0] == a.shape[0] == v.shape[0]):
            raise InterpolationError("states, actions and values must have one row per node")
        lip = np.broadcast_to(np.asarray(self.lipschitz, float), (v.shape[1],)).copy()
        if np.any(lip <= 0):
            raise InterpolationError("Lipschitz constant must be positive")
        object.__setattr__(self, "states", s)
        object.__setattr__(self, "actions", a)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "lipschitz", lip)

    @property
    def n_nodes(self) -> int:
        return self.values.shape[0]

    def envelopes(self, x: Array, a: Array) -> tuple[Array, Array]:
        """Lower and upper Lipschitz envelopes at the query rows, each ``(n, K)``."""
        x, a = _as_rows(x), _as_rows(a)
        n = x.shape[0]
        lo = np.empty((n, self.values.shape[1]))
        hi = np.empty_like(lo)
        for start in range(0, n, _BLOCK):
            sl = slice(start, min(start + _BLOCK, n))
            d = self.metric.pairwise(x[sl], a[sl], self.states, self.actions)  # (b, L)
            span = d[:, :, None] * self.lipschitz  # (b, L, K)
            lo[sl] = np.max(self.values[None] - span, axis=1)
            hi[sl] = np.min(self.values[None] + span, axis=1)
        return lo, hi

    def __call__(self, x: Array, a: Array) -> Array:
        """Interpolated values, shape ``(n, K)``."""
        x, a = _as_rows(x), _as_rows(a)
        n = x.shape[0]
        out = np.empty((n, self.values.shape[1]))
        for start in range(0, n, _BLOCK):
            sl = slice(start, min(start + _BLOCK, n))
            d = self.metric.pairwise(x[sl], a[sl], self.states, self.actions)
            span = d[:, :, None] * self.lipschitz
            lo = np.max(self.values[None] - span, axis=1)
            hi = np.min(self.values[None] + span, axis=1)
            block = 0.5 * (lo + hi)
            if self.snap:
                nearest = np.argmin(d, axis=1)
                on_node = d[np.arange(d.shape[0]), nearest] == 0.0
                block[on_node] = self.values[nearest[on_node]]
            out[sl] = block
        return out

    def to_dict(self) -> dict:
        return {
            "states": self.states.tolist(),
            "actions": self.actions.tolist(),
            "values": self.values.tolist(),
            "lipschitz": self.lipschitz.tolist(),
            "metric": {"combiner": self.metric.combiner, "action_weight": self.metric.action_weight},
            "snap": self.snap,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GridInterpolant":
        return cls(np.array(d["states"], float), np.array(d["actions"], float),
                   np.array(d["values"], float), np.array(d["lipschitz"], float),
                   ProductMetric(**d["metric"]), bool(d["snap"]))


def central_interpolate(grid: GridInterpolant, p: tuple) -> Array:
    """``I[f](x, a)`` at a single point ``p = (x, a)``; one entry per value column."""
    x, a = p
    x = np.asarray(x, float).reshape(1, -1)
    a = np.asarray(a, float).reshape(1, -1)
    return grid(x, a)[0]


def covering_radius(grid_states: Array, grid_actions: Array, probe_states: Array, probe_actions: Array,
                    metric: Optional[ProductMetric] = None) -> float:
    """``max_probe min_node rho``: a lower estimate of the covering radius."""
    metric = metric or ProductMetric()
    gs, ga = _as_rows(grid_states), _as_rows(grid_actions)
    ps, pa = _as_rows(probe_states), _as_rows(probe_actions)
    if gs.size == 0 or ps.size == 0:
        raise InterpolationError("covering radius needs a nonempty grid and probe mesh")
    worst = 0.0
    for start in range(0, ps.shape[0], _BLOCK):
        sl = slice(start, start + _BLOCK)
        d = metric.pairwise(ps[sl], pa[sl], gs, ga)
        worst = max(worst, float(np.max(np.min(d, axis=1))))
    return worst


def max_slope(states: Array, actions: Array, values: Array, metric: Optional[ProductMetric] = None) -> Array:
    """Largest difference quotient of each value column over distinct node pairs.

    The smallest Lipschitz constant with which the node data are consistent;
    columns without variation get a tiny positive floor.
    """
    metric = metric or ProductMetric()
    v = np.asarray(values, float)
    if v.ndim == 1:
        v = v[:, None]
    states, actions = _as_rows(states), _as_rows(actions)
    d = metric.pairwise(states, actions, states, actions)
    mask = d > 0
    out = np.empty(v.shape[1])
    for k in range(v.shape[1]):
        diff = np.abs(v[:, None, k] - v[None, :, k])
        out[k] = np.max(np.where(mask, diff / np.where(mask, d, 1.0), 0.0)) if np.any(mask) else 0.0
    return np.maximum(out, 1e-12)


def product_grid(states: Array, actions: Array) -> tuple[Array, Array]:
    """All pairs ``S_L x A_L`` in state-major order."""
    s, a = _as_rows(states), _as_rows(actions)
    return np.repeat(s, a.shape[0], axis=0), np.tile(a, (s.shape[0], 1))
