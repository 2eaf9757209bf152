"""Deterministic fan-out over independent tasks.

Results are always returned in task order and every task owns its RNG, so
parallel and serial runs agree exactly.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def n_threads(n_jobs: int | None = None) -> int:
    if n_jobs is not None:
        return max(1, int(n_jobs))
    try:
        return max(1, int(os.environ.get("CORE_THREADS", "1")))
    except ValueError:
        return 1


def map_ordered(fn, items, n_jobs: int | None = None) -> list:
    items = list(items)
    workers = min(n_threads(n_jobs), max(1, len(items)))
    if workers == 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def task_rng(seed: int, index: int) -> np.random.Generator:
    """Generator for replicate ``index`` of master ``seed`` (Philox, counter-based)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(index)])))
