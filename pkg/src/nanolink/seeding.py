"""Deterministic seed derivation.

Every random stream is derived from a master seed plus a tuple of integer
keys (sample index, chunk index, ...), so results do not depend on how work
is split between workers.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
R = TypeVar("R")

# Chunk size for Monte Carlo work units; fixed so the random stream layout
# never depends on the worker count.
CHUNK = 1024


def child_rng(master_seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def chunk_slices(n: int, size: int = CHUNK) -> list[slice]:
    return [slice(i, min(i + size, n)) for i in range(0, n, size)]


def ordered_map(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Map preserving input order; ``workers > 1`` uses a thread pool."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def normal_chunks(master_seed: int, n: int, dims: int, stream: int = 0) -> np.ndarray:
    """Standard normals of shape (n, dims), laid out chunk by chunk."""
    out = np.empty((n, dims))
    for ci, sl in enumerate(chunk_slices(n)):
        out[sl] = child_rng(master_seed, stream, ci).standard_normal((sl.stop - sl.start, dims))
    return out


def stable_sum(values: Sequence[float] | np.ndarray) -> float:
    """Order-fixed compensated sum (math.fsum)."""
    import math

    return math.fsum(np.asarray(values, dtype=float).ravel().tolist())
