"""Finite-horizon MDPs in random-iterative-function form.

A model is given by a kernel ``K_t(x, a, eps)`` driving the state forward
with i.i.d. noise, stagewise rewards ``R_h(x, a)`` and a terminal reward
``F(x)``.  States, actions and noise values are always handled as 2-d float
arrays of shape ``(n, dim)``; rewards come back as shape ``(n,)``.

Finite models additionally support exact backward induction
(:func:`solve_exact`), which is the oracle for everything else.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .rng import map_chunks, mean_and_stderr, stream

Array = np.ndarray
Kernel = Callable[[int, Array, Array, Array], Array]
Reward = Callable[[int, Array, Array], Array]
Terminal = Callable[[Array], Array]


class ModelError(ValueError):
    """Invalid model input (stage out of range, state outside the space, ...)."""


class NotEnumerableError(ModelError):
    """Raised when an exact computation needs a finite space or noise support."""


def as_points(x, dim: int) -> Array:
    """Coerce scalars, 1-d and 2-d inputs to an ``(n, dim)`` float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, dim) if dim > 1 else arr.reshape(-1, 1)
    if arr.shape[-1] != dim:
        raise ModelError(f"expected points of dimension {dim}, got shape {arr.shape}")
    return arr


# --------------------------------------------------------------------------
# spaces and noise laws


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """A finite set of points in R^d, enumerated in a fixed order."""

    points: Array

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts.reshape(-1, 1)
        if pts.shape[0] == 0:
            raise ModelError("finite space must be nonempty")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_lookup", {tuple(p): i for i, p in enumerate(pts)})
        object.__setattr__(self, "_order", np.argsort(pts[:, 0], kind="stable"))

    finite = True

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def eval_grid(self) -> Array:
        return self.points

    def locate(self, x) -> Array:
        """Index of each row in the enumeration, ``-1`` for points not in the space."""
        x = as_points(x, self.dim)
        if self.dim == 1:
            order = self._order
            sorted_pts = self.points[order, 0]
            pos = np.clip(np.searchsorted(sorted_pts, x[:, 0]), 0, self.size - 1)
            hit = sorted_pts[pos] == x[:, 0]
            return np.where(hit, order[pos], -1)
        return np.array([self._lookup.get(tuple(p), -1) for p in x], dtype=np.int64)

    def contains(self, x) -> Array:
        return self.locate(x) >= 0

    def index_of(self, x) -> Array:
        idx = self.locate(x)
        if np.any(idx < 0):
            bad = as_points(x, self.dim)[np.argmax(idx < 0)]
            raise ModelError(f"point {tuple(bad)} is not in the finite space")
        return idx


@dataclass(frozen=True, eq=False)
class BoxSpace:
    """Axis-aligned box in R^d (bounds may be infinite).

    ``grid`` is the finite evaluation grid used wherever a supremum over
    the space has to be computed; it is only needed for action spaces.
    """

    low: Array
    high: Array
    grid: Optional[Array] = None

    def __post_init__(self):
        low = np.atleast_1d(np.asarray(self.low, dtype=float))
        high = np.atleast_1d(np.asarray(self.high, dtype=float))
        if low.shape != high.shape or np.any(low > high):
            raise ModelError("box needs matching bounds with low <= high")
        object.__setattr__(self, "low", low)
        object.__setattr__(self, "high", high)
        if self.grid is not None:
            g = as_points(self.grid, low.size)
            if not np.all(self.contains(g)):
                raise ModelError("evaluation grid leaves the box")
            g.setflags(write=False)
            object.__setattr__(self, "grid", g)

    finite = False

    @property
    def dim(self) -> int:
        return self.low.size

    @property
    def eval_grid(self) -> Array:
        if self.grid is None:
            raise NotEnumerableError("continuous space has no declared evaluation grid")
        return self.grid

    def contains(self, x) -> Array:
        x = as_points(x, self.dim)
        return np.all((x >= self.low) & (x <= self.high), axis=1)


def uniform_action_grid(low: float, high: float, size: int = 17) -> BoxSpace:
    """1-d action box with a uniform evaluation grid including both ends."""
    if size < 1:
        raise ModelError("grid size must be >= 1")
    grid = np.linspace(low, high, size) if size > 1 else np.array([(low + high) / 2])
    return BoxSpace(low, high, grid)


@dataclass(frozen=True, eq=False)
class FiniteNoise:
    """Noise law with finitely many atoms."""

    values: Array
    probs: Array

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals.reshape(-1, 1)
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (vals.shape[0],) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ModelError("noise probabilities must be a probability vector over the atoms")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probs", p)

    enumerable = True

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def sample(self, rng: np.random.Generator, n: int) -> Array:
        if self.values.shape[0] == 1:
            return np.repeat(self.values, n, axis=0)
        idx = rng.choice(self.values.shape[0], size=n, p=self.probs)
        return self.values[idx]

    def enumerate(self) -> tuple[Array, Array]:
        return self.values, self.probs


@dataclass(frozen=True)
class GaussianNoise:
    """Standard Gaussian noise on R^dim."""

    dim: int = 1
    enumerable = False

    def sample(self, rng: np.random.Generator, n: int) -> Array:
        return rng.standard_normal((n, self.dim))

    def enumerate(self):
        raise NotEnumerableError("Gaussian noise has no finite support")

    def quadrature(self, nodes: int = 64) -> tuple[Array, Array]:
        """Gauss-Hermite rule for N(0, 1) (only ``dim == 1``)."""
        if self.dim != 1:
            raise NotEnumerableError("quadrature only shipped for 1-d Gaussian noise")
        x, w = np.polynomial.hermite_e.hermegauss(nodes)
        return x.reshape(-1, 1), w / w.sum()


# --------------------------------------------------------------------------
# metric


_COMBINERS = {
    "l1": lambda u, v: u + v,
    "l2": lambda u, v: np.hypot(u, v),
    "max": np.maximum,
}


@dataclass(frozen=True)
class ProductMetric:
    """``rho((x,a),(x',a')) = ||(rho_S(x,x'), rho_A(a,a'))||`` with Euclidean factors."""

    combiner: str = "l1"
    action_weight: float = 1.0

    def __post_init__(self):
        if self.combiner not in _COMBINERS:
            raise ValueError(f"unknown combiner {self.combiner!r}; use one of {sorted(_COMBINERS)}")
        if self.action_weight <= 0:
            raise ValueError("action_weight must be positive")

    @staticmethod
    def _euclid(p: Array, q: Array) -> Array:
        diff = p[:, None, :] - q[None, :, :]
        if p.shape[1] == 1:
            return np.abs(diff[..., 0])
        return np.sqrt(np.sum(diff**2, axis=-1))

    def rho_s(self, x: Array, y: Array) -> Array:
        """Pairwise state distances, shape ``(len(x), len(y))``."""
        return self._euclid(np.asarray(x, float), np.asarray(y, float))

    def rho_a(self, a: Array, b: Array) -> Array:
        return self.action_weight * self._euclid(np.asarray(a, float), np.asarray(b, float))

    def pairwise(self, x: Array, a: Array, y: Array, b: Array) -> Array:
        return _COMBINERS[self.combiner](self.rho_s(x, y), self.rho_a(a, b))

    def __call__(self, x, a, y, b) -> float:
        x, a, y, b = (np.atleast_2d(np.asarray(v, float)) for v in (x, a, y, b))
        return float(self.pairwise(x, a, y, b)[0, 0])


# --------------------------------------------------------------------------
# model


@dataclass(frozen=True, eq=False)
class MdpModel:
    """Finite-horizon MDP ``S_t = K_t(S_{t-1}, a_{t-1}, eps_t)``.

    ``kernel(t, x, a, eps)`` is defined for ``t = 1..H``; ``reward(h, x, a)``
    for ``h = 0..H-1``.  All callables are vectorised over rows.
    """

    horizon: int
    states: FiniteSpace | BoxSpace
    actions: FiniteSpace | BoxSpace
    noise: FiniteNoise | GaussianNoise
    kernel: Kernel
    reward: Reward
    terminal: Terminal
    r_max: float
    lipschitz_reward: float = 0.0
    lipschitz_kernel: float = 0.0
    metric: ProductMetric = field(default_factory=ProductMetric)
    name: str = "model"
    # Optional Gaussian-kernel description (mean(t, x, a), sigma) used by the
    # score-function martingales.
    gaussian_kernel: Optional[tuple[Callable[[int, Array, Array], Array], float]] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ModelError("horizon must be >= 1")
        if self.r_max < 0:
            raise ModelError("r_max must be non-negative")

    @property
    def action_grid(self) -> Array:
        return self.actions.eval_grid

    @property
    def is_finite(self) -> bool:
        return self.states.finite and self.actions.finite

    def transition(self, t: int, x: Array, a: Array, eps: Array) -> Array:
        """Vectorised kernel without membership checks (hot path)."""
        return self.kernel(t, x, a, eps)

    def reward_at(self, h: int, x: Array, a: Array) -> Array:
        return self.reward(h, x, a)

    def terminal_at(self, x: Array) -> Array:
        return self.terminal(x)

    def clip_level(self, h: int) -> float:
        """``(H - h + 1) * r_max``: bound on ``|V_h|``."""
        return (self.horizon - h + 1) * self.r_max

    @property
    def v_max(self) -> float:
        return self.clip_level(0)


def step(model: MdpModel, t: int, x, a, eps) -> Array:
    """One transition ``K_t(x, a, eps)`` with full input validation."""
    if not 1 <= t <= model.horizon:
        raise ModelError(f"stage {t} outside 1..{model.horizon}")
    x = as_points(x, model.states.dim)
    a = as_points(a, model.actions.dim)
    eps = as_points(eps, model.noise.dim)
    if not np.all(model.states.contains(x)):
        raise ModelError("state outside the declared state space")
    if not np.all(model.actions.contains(a)):
        raise ModelError("action outside the declared action space")
    out = model.kernel(t, x, a, eps)
    return out


def check_model(model: MdpModel, n: int = 256, seed: int = 0) -> list[str]:
    """Spot-check reward bound, kernel range and kernel Lipschitz constant.

    Returns a list of human-readable violations (empty when all checks pass).
    """
    rng = stream(seed, "check_model")
    problems = []
    H = model.horizon

    def draw_states(m):
        if model.states.finite:
            return model.states.points[rng.integers(model.states.size, size=m)]
        lo = np.where(np.isfinite(model.states.low), model.states.low, -5.0)
        hi = np.where(np.isfinite(model.states.high), model.states.high, 5.0)
        return rng.uniform(lo, hi, size=(m, model.states.dim))

    def draw_actions(m):
        grid = model.action_grid
        return grid[rng.integers(grid.shape[0], size=m)]

    x, a = draw_states(n), draw_actions(n)
    x2, a2 = draw_states(n), draw_actions(n)
    eps = model.noise.sample(rng, n)
    tol = 1e-12 * max(1.0, model.r_max)
    if np.any(np.abs(model.terminal(x)) > model.r_max + tol):
        problems.append("|F| exceeds r_max")
    for h in range(H):
        if np.any(np.abs(model.reward(h, x, a)) > model.r_max + tol):
            problems.append(f"|R_{h}| exceeds r_max")
    for t in range(1, H + 1):
        y = model.kernel(t, x, a, eps)
        if not np.all(model.states.contains(y)):
            problems.append(f"K_{t} leaves the state space")
        if model.lipschitz_kernel > 0:
            y2 = model.kernel(t, x2, a2, eps)
            lhs = np.linalg.norm(y - y2, axis=1)
            rho = np.array([model.metric(x[i], a[i], x2[i], a2[i]) for i in range(n)])
            if np.any(lhs > model.lipschitz_kernel * rho + 1e-12):
                problems.append(f"K_{t} violates the declared Lipschitz constant")
    return problems


# --------------------------------------------------------------------------
# policies


class Policy:
    """Deterministic Markov policy; ``policy(h, x)`` returns actions ``(n, d_A)``."""

    horizon: int

    def __call__(self, h: int, x: Array) -> Array:  # pragma: no cover - interface
        raise NotImplementedError


class TablePolicy(Policy):
    """Lookup-table policy on a finite state space (action indices per stage)."""

    def __init__(self, model: MdpModel, table):
        if not model.states.finite:
            raise NotEnumerableError("table policies need a finite state space")
        self.model = model
        self.table = np.asarray(table, dtype=np.int64)
        self.horizon = model.horizon
        if self.table.shape != (model.horizon, model.states.size):
            raise ModelError(f"policy table must have shape (H, |S|), got {self.table.shape}")
        if np.any((self.table < 0) | (self.table >= model.action_grid.shape[0])):
            raise ModelError("policy table holds an invalid action index")

    def __call__(self, h: int, x: Array) -> Array:
        idx = self.model.states.index_of(x)
        return self.model.action_grid[self.table[h, idx]]


class FunctionPolicy(Policy):
    """Policy from a function ``f(h, x) -> action indices`` into the action grid."""

    def __init__(self, model: MdpModel, fn: Callable[[int, Array], Array]):
        self.model = model
        self.fn = fn
        self.horizon = model.horizon

    def __call__(self, h: int, x: Array) -> Array:
        return self.model.action_grid[np.asarray(self.fn(h, x), dtype=np.int64)]


# --------------------------------------------------------------------------
# exact solution


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """Backward-induction tables on a finite model.

    ``values[h, i]`` is ``V*_h`` at state ``i``; ``q[h, i, j]`` is ``Q*_h`` at
    state ``i`` and action ``j``; ``policy[h, i]`` is the optimal action index.
    """

    model: MdpModel
    values: Array
    q: Array
    policy: Array
    transitions: Array  # (H, |S|, |A|, |S|) with P_{h+1}(x' | x, a)

    def value(self, h: int, x) -> Array:
        return self.values[h, self.model.states.index_of(x)]

    def value0(self, x0) -> float:
        return float(self.value(0, x0)[0])

    def as_policy(self) -> TablePolicy:
        return TablePolicy(self.model, self.policy)


def transition_matrix(model: MdpModel, t: int) -> Array:
    """``P[i, j, k] = P(K_t(x_i, a_j, eps) = x_k)`` by exhaustive noise enumeration."""
    if not model.is_finite:
        raise NotEnumerableError("transition matrices need finite states and actions")
    eps, probs = model.noise.enumerate()
    S, A = model.states.points, model.action_grid
    nS, nA, nE = S.shape[0], A.shape[0], eps.shape[0]
    xs = np.repeat(S, nA * nE, axis=0)
    acts = np.tile(np.repeat(A, nE, axis=0), (nS, 1))
    es = np.tile(eps, (nS * nA, 1))
    nxt = model.states.index_of(model.kernel(t, xs, acts, es)).reshape(nS, nA, nE)
    P = np.zeros((nS, nA, nS))
    for e in range(nE):
        np.add.at(P, (np.arange(nS)[:, None], np.arange(nA)[None, :], nxt[:, :, e]), probs[e])
    return P


def solve_exact(model: MdpModel) -> ExactSolution:
    """Exact dynamic programming on a finite model, lowest-index argmax."""
    H = model.horizon
    S, A = model.states.points, model.action_grid
    nS, nA = S.shape[0], A.shape[0]
    P = np.stack([transition_matrix(model, t) for t in range(1, H + 1)])
    xs = np.repeat(S, nA, axis=0)
    acts = np.tile(A, (nS, 1))
    V = np.zeros((H + 1, nS))
    Q = np.zeros((H, nS, nA))
    pol = np.zeros((H, nS), dtype=np.int64)
    V[H] = model.terminal(S)
    for h in range(H - 1, -1, -1):
        R = model.reward(h, xs, acts).reshape(nS, nA)
        Q[h] = R + P[h] @ V[h + 1]
        pol[h] = np.argmax(Q[h], axis=1)
        V[h] = Q[h][np.arange(nS), pol[h]]
    for arr in (V, Q, pol, P):
        arr.setflags(write=False)
    return ExactSolution(model, V, Q, pol, P)


# --------------------------------------------------------------------------
# Monte Carlo policy evaluation


def simulate_noise(model: MdpModel, n_paths: int, seed: int, tag: str) -> list[Array]:
    """Per-stage noise blocks ``eps_1..eps_H``, each of shape ``(n_paths, d_E)``."""
    return [model.noise.sample(stream(seed, tag, t), n_paths) for t in range(1, model.horizon + 1)]


def policy_path_values(model: MdpModel, policy: Policy, x0, noise: list[Array], threads: int = 1) -> Array:
    """Cumulative reward of each path under ``policy`` for the given noise blocks."""
    x0 = as_points(x0, model.states.dim)[:1]
    n = noise[0].shape[0]

    def run(sl: slice) -> Array:
        m = sl.stop - sl.start
        x = np.repeat(x0, m, axis=0)
        total = np.zeros(m)
        for h in range(model.horizon):
            a = policy(h, x)
            total += model.reward(h, x, a)
            x = model.kernel(h + 1, x, a, noise[h][sl])
        return total + model.terminal(x)

    return map_chunks(run, n, threads)


def evaluate_policy_mc(model: MdpModel, policy: Policy, x0, n_paths: int, seed: int,
                       threads: int = 1) -> tuple[float, float]:
    """Unbiased Monte Carlo estimate of ``V^pi_0(x0)`` and its standard error."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    noise = simulate_noise(model, n_paths, seed, "policy")
    return mean_and_stderr(policy_path_values(model, policy, x0, noise, threads))
