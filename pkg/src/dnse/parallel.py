"""Worker-count policy (``DNSE_THREADS``)."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def max_workers() -> int:
    raw = os.environ.get("DNSE_THREADS", "").strip()
    if not raw:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"DNSE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"DNSE_THREADS must be a positive integer, got {raw!r}")
    return n


def fft_workers() -> int:
    return max_workers()


def map_ordered(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Map over independent jobs, in parallel when allowed; results keep input order."""
    items = list(items)
    n = min(max_workers(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
