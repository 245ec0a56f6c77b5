from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def trajectory_seed(seed: int, *index: int) -> np.random.SeedSequence:
    """Independent stream for one trajectory, stable under any execution order."""
    return np.random.SeedSequence([int(seed), *[int(i) for i in index]])


def int_seed(ss: np.random.SeedSequence) -> int:
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def map_indexed(fn, n: int, threads: int | None = None) -> list:
    """fn(i) for i in range(n), results in index order. Compiled kernels release the GIL."""
    threads = threads or 1
    if threads <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))
