"""Thread pool used for block-parallel numerics"""

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from plom.config import MAX_THREADS

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

_thread_cap = max(1, MAX_THREADS)


def set_thread_cap(threads: int | None) -> None:
    """Cap the number of workers (the `--threads` knob)"""
    global _thread_cap
    if threads is not None:
        _thread_cap = max(1, int(threads))
        logger.debug(f"Thread cap set to {_thread_cap}")


def get_thread_cap() -> int:
    return _thread_cap


def map_blocks(func: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Apply func to every item, results returned in item order"""
    if _thread_cap <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(_thread_cap, len(items))) as pool:
        return list(pool.map(func, items))
