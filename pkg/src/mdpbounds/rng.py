"""Counter-based random streams and deterministic chunked execution.

Every sampling routine in the package takes an explicit integer seed and
derives its generator from ``(seed, *tags)`` through :func:`stream`.  The
bit generator is Philox (counter based), keyed by a ``SeedSequence`` built
from the seed and the tags, so the draws for e.g. stage 3 of the test paths
never depend on how many other streams were consumed before.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

# Chunk size for path loops.  Fixed so results never depend on thread count.
CHUNK = 2048


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        if tag < 0:
            raise ValueError("integer stream tags must be non-negative")
        return int(tag)
    return zlib.crc32(str(tag).encode("utf-8"))


def stream(seed: int, *tags) -> np.random.Generator:
    """Independent generator for the stream named by ``(seed, *tags)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed)] + [_tag_to_int(t) for t in tags]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def map_chunks(fn: Callable[[slice], np.ndarray], n: int, threads: int = 1,
               chunk: int = CHUNK) -> np.ndarray:
    """Apply ``fn`` to fixed-size slices of ``range(n)`` and concatenate in order.

    ``chunk`` must not depend on ``threads``; that keeps every result
    independent of the degree of parallelism.
    """
    slices = [slice(i, min(i + chunk, n)) for i in range(0, n, chunk)]
    if threads <= 1 or len(slices) <= 1:
        parts = [fn(s) for s in slices]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(fn, slices))
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def mean_and_stderr(values: Sequence[float]) -> tuple[float, float]:
    """Sample mean and standard error with exactly rounded sums.

    The sum is shifted by the first value, so a constant sample returns that
    constant and a standard error of exactly zero.
    """
    v = np.asarray(values, dtype=float).ravel()
    n = v.size
    if n == 0:
        raise ValueError("empty sample")
    shift = float(v[0])
    mean = shift + math.fsum(v - shift) / n
    if n == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


def compensated_mean(rows: np.ndarray) -> np.ndarray:
    """Column means of a 2-d array using exactly rounded summation."""
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    flat = rows.reshape(n, -1)
    out = np.array([math.fsum(flat[:, j]) for j in range(flat.shape[1])]) / n
    return out.reshape(rows.shape[1:])
