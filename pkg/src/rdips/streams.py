"""Replayable randomness for the graphical construction.

Every mark owns a unit-intensity Poisson point process on ``(0, inf)^2``.
It is realized as independent rate-1 time processes on the horizontal
stripes ``[s, s+1)`` of the second axis, each cut into time blocks of
length ``block_length``.  The points of one ``(mark, stripe, block)`` cell
come from a Philox generator whose key is a hash of
``(master_seed, replica_id, mark, stripe, block)``, so any cell can be
regenerated in isolation and every flow reading the same stream sees the
same points.
"""

from __future__ import annotations

import bisect
import hashlib
import struct

import numpy as np

__all__ = ["EventStream", "derive_key"]

_PPP_TAG = 0x505050
_GEN_TAG = 0x47454E
_MASK64 = (1 << 64) - 1


def derive_key(tag: int, seed: int, replica: int, ints) -> np.ndarray:
    """128-bit Philox key for a tuple of integers."""
    ints = tuple(ints)
    payload = struct.pack("<QQqq", tag, seed & _MASK64, replica, len(ints))
    payload += struct.pack(f"<{len(ints)}q", *ints)
    digest = hashlib.blake2b(payload, digest_size=16).digest()
    return np.frombuffer(digest, dtype=np.uint64).copy()


class EventStream:
    """Deterministic realization of all mark point processes of one replica."""

    def __init__(self, master_seed: int, replica_id: int = 0, block_length: float = 2.0, cache_limit: int = 500_000):
        if not 0 <= int(master_seed) <= _MASK64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        self.master_seed = int(master_seed)
        self.replica_id = int(replica_id)
        self.block_length = float(block_length)
        self.cache_limit = cache_limit
        self._cache: dict = {}

    def for_replica(self, replica_id: int) -> "EventStream":
        return EventStream(self.master_seed, replica_id, self.block_length, self.cache_limit)

    def block(self, mark_key: tuple, stripe: int, index: int) -> tuple[list, list]:
        """Sorted point times and heights of one cell."""
        cell = (mark_key, stripe, index)
        hit = self._cache.get(cell)
        if hit is not None:
            return hit
        key = derive_key(_PPP_TAG, self.master_seed, self.replica_id, mark_key + (stripe, index))
        gen = np.random.Generator(np.random.Philox(key=key))
        width = self.block_length
        count = int(gen.poisson(width))
        times = (np.sort(gen.random(count)) * width + index * width).tolist()
        heights = (gen.random(count) + stripe).tolist()
        if len(self._cache) >= self.cache_limit:
            self._cache.clear()
        self._cache[cell] = hit = (times, heights)
        return hit

    def next_point(self, mark_key: tuple, stripe: int, after: float, horizon: float):
        """First point of the stripe strictly after ``after``, as ``(t, u, block, pos)``.

        Returns ``None`` when no point falls before ``horizon``.
        """
        index = int(after // self.block_length)
        times, heights = self.block(mark_key, stripe, index)
        pos = bisect.bisect_right(times, after)
        return self._scan(mark_key, stripe, index, pos, times, heights, horizon)

    def advance(self, mark_key: tuple, stripe: int, index: int, pos: int, horizon: float):
        """Point following position ``pos`` of block ``index``."""
        times, heights = self.block(mark_key, stripe, index)
        return self._scan(mark_key, stripe, index, pos + 1, times, heights, horizon)

    def _scan(self, mark_key, stripe, index, pos, times, heights, horizon):
        width = self.block_length
        while pos >= len(times):
            index += 1
            if index * width > horizon:
                return None
            times, heights = self.block(mark_key, stripe, index)
            pos = 0
        t = times[pos]
        if t > horizon:
            return None
        return (t, heights[pos], index, pos)

    def generator(self, *tag: int) -> np.random.Generator:
        """Independent numpy generator for auxiliary draws keyed by ``tag``."""
        key = derive_key(_GEN_TAG, self.master_seed, self.replica_id, tag)
        return np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"EventStream(seed={self.master_seed}, replica={self.replica_id})"
