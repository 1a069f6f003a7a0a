"""Order-preserving fan-out of replica work over worker processes."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

__all__ = ["map_replicas"]


def map_replicas(func: Callable, items: Sequence, threads: int = 1) -> list:
    """``[func(x) for x in items]``, computed by ``threads`` processes.

    Results come back in input order, so any reduction over them is
    independent of the worker count.
    """
    items = list(items)
    if threads <= 1 or len(items) < 2:
        return [func(x) for x in items]
    chunk = max(1, len(items) // (threads * 8))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items, chunksize=chunk))


def chunked(seq: Iterable, size: int) -> list:
    seq = list(seq)
    return [seq[i : i + size] for i in range(0, len(seq), size)]
