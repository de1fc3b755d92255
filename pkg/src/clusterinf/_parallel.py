"""Deterministic chunked parallel map.

Work is cut into chunks whose boundaries depend only on the problem size,
never on the worker count, and results are reassembled in chunk order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

THREADS_ENV = "CLUSTERINF_THREADS"


def default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    try:
        n = int(raw)
    except ValueError:
        n = 1
    return max(1, n)


def chunk_bounds(total: int, size: int) -> list[tuple[int, int]]:
    size = max(1, int(size))
    return [(s, min(s + size, total)) for s in range(0, total, size)]


def pmap(func: Callable, items: Sequence, threads: int | None = None) -> list:
    threads = default_threads() if threads is None else max(1, int(threads))
    if threads == 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))
