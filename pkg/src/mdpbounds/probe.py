"""Empirical check of uniform-in-parameter Monte Carlo mean estimation.

For a family ``f(theta, xi)`` Lipschitz in ``theta`` the error
``sup_theta |mean_N f(theta, .) - E f(theta, .)|`` should decay like
``N^{-1/2}`` up to logarithmic factors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .rng import stream

Array = np.ndarray
Family = Callable[[Array, Array], Array]  # (params (P,), xi (n,)) -> (n, P)


def linear_family(params: Array, xi: Array) -> Array:
    """``f(a, xi) = a xi``; every mean is zero."""
    return xi[:, None] * params[None, :]


def constant_family(c: float = 1.0) -> Family:
    def f(params, xi):
        return np.full((xi.shape[0], params.shape[0]), float(c))

    return f


def standard_normal(rng: np.random.Generator, n: int) -> Array:
    return rng.standard_normal(n)


def reference_means(f: Family, params: Array, n: int = 10**7, seed: int = 0, chunk: int = 1 << 18,
                    sampler=standard_normal) -> Array:
    """Monte Carlo means from a large independent sample."""
    rng = stream(seed, "probe-reference")
    total = np.zeros(len(params))
    shift = None
    done = 0
    while done < n:
        b = min(chunk, n - done)
        vals = f(params, sampler(rng, b))
        if shift is None:
            shift = vals[0].copy()
        total += (vals - shift).sum(axis=0)
        done += b
    return shift + total / n


@dataclass
class ProbeRow:
    N: int
    sup_error: float


def uniform_error_probe(f: Family, params: Sequence[float], sizes: Sequence[int], seed: int,
                        true_means: Optional[Array] = None, reps: int = 1,
                        sampler=standard_normal) -> list[ProbeRow]:
    """``sup_theta |empirical - true mean|`` for each ``N``, averaged over ``reps`` independent samples."""
    params = np.asarray(params, float).ravel()
    if params.size == 0:
        raise ValueError("parameter grid is empty")
    if any(int(n) < 1 for n in sizes):
        raise ValueError("every N must be >= 1")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    mu = reference_means(f, params, seed=seed, sampler=sampler) if true_means is None else np.asarray(true_means)
    rows = []
    for n in sizes:
        errs = []
        for r in range(reps):
            xi = sampler(stream(seed, "probe", int(n), r), int(n))
            vals = f(params, xi)
            # shifted by the first draw: a constant family has exactly zero error
            est = vals[0] + (vals - vals[0]).mean(axis=0)
            errs.append(float(np.max(np.abs(est - mu))))
        rows.append(ProbeRow(int(n), float(np.mean(errs))))
    return rows


def loglog_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])
