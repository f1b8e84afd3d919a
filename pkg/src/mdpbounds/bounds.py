"""Lower and upper Monte Carlo bounds on ``V*_0(x0)``.

The upper bound solves, for each simulated noise sequence, the anticipative
problem

    max over a_0..a_{H-1} of  sum_t [R_t(S_t, a_t) - xi_{t+1}(S_t, a_t, eps_{t+1})] + F(S_H)

with ``S_{t+1} = K_{t+1}(S_t, a_t, eps_{t+1})`` and the noise held fixed.
The maximisation is exhaustive over the finite action grid: the tree is
expanded one stage at a time for a block of paths, rows ordered
(path, prefix, action), so the first maximiser in a row is the
lexicographically smallest action sequence.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .mdp import MdpModel, as_points, evaluate_policy_mc, simulate_noise
from .primal import greedy_policy
from .rng import map_chunks, mean_and_stderr

Array = np.ndarray

DEFAULT_NODE_CAP = 10**6
# Leaves held in memory per block of paths, and the most paths per block.
_LEAF_BUDGET = 1 << 18
_MAX_PATHS = 512


class NodeCapExceeded(ValueError):
    """The action tree is too large: coarsen the action grid or shorten the horizon."""


def tree_nodes(n_actions: int, horizon: int) -> int:
    return sum(n_actions**t for t in range(1, horizon + 1))


def _check_cap(model: MdpModel, cap: int) -> int:
    m = model.action_grid.shape[0]
    nodes = tree_nodes(m, model.horizon)
    if nodes > cap:
        raise NodeCapExceeded(f"action tree has {nodes} nodes (> cap {cap}); "
                              "coarsen the action grid or reduce the horizon")
    return m


def pathwise_values(model: MdpModel, family, x0, noise: Array) -> tuple[Array, Array]:
    """Inner maxima and maximising leaf indices for a block of noise paths.

    ``noise`` has shape ``(n, H, d_E)``.
    """
    x0 = as_points(x0, model.states.dim)[:1]
    grid = model.action_grid
    m = grid.shape[0]
    n = noise.shape[0]
    x = np.repeat(x0, n, axis=0)
    acc = np.zeros(n)
    prefixes = 1
    for t in range(model.horizon):
        rows = n * prefixes
        X = np.repeat(x, m, axis=0)
        A = np.tile(grid, (rows, 1))
        E = np.repeat(noise[:, t, :], prefixes * m, axis=0)
        y = model.kernel(t + 1, X, A, E)
        gain = model.reward(t, X, A) - family.penalty(t, X, A, E, y)
        acc = np.repeat(acc, m) + gain
        x = y
        prefixes *= m
    acc = (acc + model.terminal(x)).reshape(n, prefixes)
    best = np.argmax(acc, axis=1)
    return acc[np.arange(n), best], best


def decode_path(index: int, n_actions: int, horizon: int) -> list[int]:
    """Leaf index -> action indices ``(a_0, ..., a_{H-1})``."""
    digits = []
    for _ in range(horizon):
        index, r = divmod(int(index), n_actions)
        digits.append(r)
    return digits[::-1]


@dataclass(frozen=True, eq=False)
class PathwiseProblem:
    model: MdpModel
    family: object
    noise: Array  # (H, d_E)
    x0: Array
    node_cap: int = DEFAULT_NODE_CAP


def pathwise_sup(problem: PathwiseProblem) -> tuple[float, list]:
    """Exact inner maximum for one noise sequence and the maximising actions."""
    model = problem.model
    m = _check_cap(model, problem.node_cap)
    noise = np.asarray(problem.noise, float).reshape(1, model.horizon, model.noise.dim)
    value, leaf = pathwise_values(model, problem.family, problem.x0, noise)
    idx = decode_path(leaf[0], m, model.horizon)
    return float(value[0]), [model.action_grid[i].tolist() for i in idx]


def draw_test_noise(model: MdpModel, n: int, seed: int) -> Array:
    """``(n, H, d_E)`` noise sequences for the upper-bound paths."""
    return np.stack(simulate_noise(model, n, seed, "test"), axis=1)


def upper_bound_values(model: MdpModel, family, x0, N_test: int, seed: int, threads: int = 1,
                       node_cap: int = DEFAULT_NODE_CAP) -> Array:
    if N_test < 1:
        raise ValueError("N_test must be >= 1")
    m = _check_cap(model, node_cap)
    noise = draw_test_noise(model, N_test, seed)
    chunk = max(1, min(_MAX_PATHS, _LEAF_BUDGET // m**model.horizon))
    return map_chunks(lambda sl: pathwise_values(model, family, x0, noise[sl])[0], N_test, threads, chunk)


def upper_bound(model: MdpModel, family, x0, N_test: int, seed: int, threads: int = 1,
                node_cap: int = DEFAULT_NODE_CAP) -> tuple[float, float]:
    """Mean and standard error of the pathwise maxima (upper-biased for ``V*_0(x0)``)."""
    return mean_and_stderr(upper_bound_values(model, family, x0, N_test, seed, threads, node_cap))


def lower_bound(model: MdpModel, estimates, x0, n_paths: int, seed: int, threads: int = 1) -> tuple[float, float]:
    """Value of the greedy policy induced by the primal estimates."""
    return evaluate_policy_mc(model, greedy_policy(estimates), x0, n_paths, seed, threads)


@dataclass
class BoundReport:
    testbed: str
    x0: list
    lower: float
    lower_se: float
    upper: float
    upper_se: float
    oracle: Optional[float]
    params: dict
    seeds: dict
    wall_clock_s: dict = field(default_factory=dict)
    schema_version: int = 1

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    def sandwich_ok(self, k: float = 4.0) -> bool:
        """``lower - k se <= oracle <= upper + k se`` (oracle required)."""
        if self.oracle is None:
            raise ValueError("no oracle value in this report")
        return (self.lower - k * self.lower_se <= self.oracle <= self.upper + k * self.upper_se)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = asdict(self)
        d["gap"] = self.gap
        if not include_timing:
            d.pop("wall_clock_s")
        return d
