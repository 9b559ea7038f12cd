"""Shared process-level helpers."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def worker_count():
    """Worker cap from GDIFF_THREADS (default: up to 4, bounded by CPUs)."""
    env = os.environ.get("GDIFF_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError:
            return 1
    return max(1, min(4, os.cpu_count() or 1))


def parallel_map(fn, items):
    """Order-preserving map over an embarrassingly parallel workload."""
    items = list(items)
    n = worker_count()
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
