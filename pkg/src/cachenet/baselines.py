"""Path replication with classical eviction policies.

Every response is cached at each node it traverses on its way back to the
requester; the node evicts according to its policy when full. Source items
are pinned and never evicted.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

__all__ = ["POLICIES", "ClassicCache"]

POLICIES = ("LRU", "LFU", "FIFO", "RR")


class ClassicCache:
    """Cache with ``slots`` evictable entries plus pinned source items.

    Parameters
    ----------
    policy : str
        One of ``LRU``, ``LFU``, ``FIFO``, ``RR``.
    slots : int
        Evictable capacity.
    pinned : iterable of int
        Items stored permanently.
    rng : numpy.random.Generator, optional
        Randomness for ``RR``.
    persistent_counts : bool
        ``LFU`` only. By default an item's count restarts when it is
        evicted; with this flag counts survive eviction.
    initial : iterable of int, optional
        Starting contents in insertion order.
    """

    def __init__(self, policy, slots, pinned=(), rng=None, persistent_counts=False, initial=()):
        if policy not in POLICIES:
            raise ValueError(f"unknown policy {policy!r}; expected one of {list(POLICIES)}")
        if slots < 0:
            raise ValueError("slots must be nonnegative")
        self.policy = policy
        self.slots = int(slots)
        self.pinned = frozenset(int(i) for i in pinned)
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.persistent_counts = persistent_counts
        # insertion order for FIFO/LFU ties, recency order for LRU
        self.order: OrderedDict[int, None] = OrderedDict()
        self.counts: dict[int, int] = {}
        for i in initial:
            self._insert(int(i))
        if len(self.order) > self.slots:
            raise ValueError("initial contents exceed the evictable capacity")

    def __contains__(self, item) -> bool:
        return item in self.pinned or item in self.order

    def contents(self) -> set[int]:
        return set(self.order) | self.pinned

    def _insert(self, item: int) -> None:
        self.order[item] = None
        self.counts[item] = self.counts.get(item, 0) + 1 if self.persistent_counts else 1

    def _victim(self) -> int:
        if self.policy in ("LRU", "FIFO"):
            return next(iter(self.order))
        if self.policy == "LFU":
            # min over insertion order keeps the oldest among equal counts
            return min(self.order, key=lambda j: self.counts[j])
        keys = sorted(self.order)
        return keys[int(self.rng.integers(len(keys)))]

    def on_response(self, item: int) -> int | None:
        """Handle a response for ``item`` passing through; returns the evicted item."""
        if item in self.pinned or self.slots == 0:
            return None
        if item in self.order:
            self.on_request_hit_update(item)
            return None
        evicted = None
        if len(self.order) >= self.slots:
            evicted = self._victim()
            del self.order[evicted]
            if not self.persistent_counts:
                del self.counts[evicted]
        self._insert(item)
        return evicted

    def on_request_hit_update(self, item: int) -> None:
        """Refresh policy metadata when a request is served here."""
        if item not in self.order:
            return
        if self.policy == "LRU":
            self.order.move_to_end(item)
        elif self.policy == "LFU":
            self.counts[item] += 1
