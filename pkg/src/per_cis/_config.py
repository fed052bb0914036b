"""Process-wide knobs: worker count and tolerances."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")

_threads: int | None = None


def set_threads(n: int | None) -> None:
    global _threads
    if n is not None and n < 1:
        raise ValueError("threads must be >= 1")
    _threads = n


def threads() -> int:
    if _threads is not None:
        return _threads
    env = os.environ.get("PER_CIS_THREADS")
    if env:
        n = int(env)
        if n < 1:
            raise ValueError("PER_CIS_THREADS must be >= 1")
        return n
    return 1


def pmap(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """Order-preserving map, threaded when more than one worker is allowed."""
    items = list(items)
    n = min(threads(), len(items))
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
