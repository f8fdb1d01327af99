"""Shared-memory thread pool used by the kernels and table builders.

Work items are mapped to disjoint output slots and reduced afterwards in a
fixed order, so results do not depend on the number of threads.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_num_threads = 1
_pool: ThreadPoolExecutor | None = None


def set_num_threads(n: int | None) -> int:
    """Set the worker count (``None`` means the hardware count)."""
    global _num_threads, _pool
    if n is None:
        n = os.cpu_count() or 1
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    if _pool is not None:
        _pool.shutdown(wait=True)
        _pool = None
    _num_threads = int(n)
    return _num_threads


def get_num_threads() -> int:
    return _num_threads


def pmap(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Ordered parallel map; output order always equals input order."""
    global _pool
    items = list(items)
    if _num_threads == 1 or len(items) < 2:
        return [fn(item) for item in items]
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_num_threads)
    return list(_pool.map(fn, items))
