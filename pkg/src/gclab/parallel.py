"""Order-preserving map over an optional thread pool (GCLAB_THREADS caps workers)."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

from .core import InvalidInput


def worker_count() -> int:
    raw = os.environ.get("GCLAB_THREADS", "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidInput(f"GCLAB_THREADS must be an integer, got {raw!r}") from None
    if n <= 0:
        n = os.cpu_count() or 1
    return n


def parallel_map(func, items):
    """``[func(x) for x in items]``, possibly concurrent; results keep input order."""
    items = list(items)
    n = min(worker_count(), len(items))
    if n <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(func, items))
