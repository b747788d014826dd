"""Adaptive distributed caching: projected gradient ascent and greedy path
replication.

Both algorithms learn from messages that travel along request paths. Under
gradient ascent every request spawns a control message that walks the path
forward while the accumulated state stays at most 1 and then returns,
summing edge weights on the way back. Under greedy path replication the
response itself carries a weight counter.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .demand import Demand
from .objective import check_marginals, lexicographic_fill
from .relaxation import project_marginals
from .rounding import build_distribution, sample
from .topology import Topology

__all__ = [
    "ControlMessage",
    "pga_forward_control",
    "pga_reverse_sniff",
    "grd_weight_counter",
    "PgaState",
    "GrdNode",
]


@dataclass
class ControlMessage:
    """Metadata walk along a request path.

    ``prefix_sums[k]`` is the state mass of the item over positions
    ``0 .. k``, recorded during the forward phase.
    """

    item: int
    path: tuple[int, ...]
    cumulative_state_sum: float = 0.0
    weight_counter: float = 0.0
    direction: str = "forward"
    prefix_sums: list[float] = field(default_factory=list)


def pga_forward_control(msg: ControlMessage, Y) -> int:
    """Walk ``msg`` forward; return the first position whose accumulated
    state exceeds 1, or the last position of the path."""
    last = len(msg.path) - 1
    for k, v in enumerate(msg.path):
        msg.cumulative_state_sum += float(Y[v, msg.item])
        msg.prefix_sums.append(msg.cumulative_state_sum)
        if msg.cumulative_state_sum > 1.0:
            return k
    return last


def pga_reverse_sniff(msg: ControlMessage, topology: Topology, stop: int) -> list[tuple[int, float]]:
    """Walk ``msg`` back from ``stop`` to the origin.

    The counter picks up the weight of the edge leaving position ``k``
    towards the origin whenever the forward mass at ``k`` was at most 1.
    Returns ``(node, counter)`` as sniffed at positions ``stop - 1 .. 0``;
    nodes past ``stop`` see nothing.
    """
    msg.direction = "reverse"
    path = msg.path
    stop = min(stop, len(path) - 1)
    out = []
    for k in range(stop - 1, -1, -1):
        if msg.prefix_sums[k] <= 1.0:
            msg.weight_counter += topology.edges[(path[k + 1], path[k])]
        out.append((path[k], msg.weight_counter))
    return out


def grd_weight_counter(topology: Topology, path, hit: int) -> list[tuple[int, float]]:
    """Counter values sniffed by nodes downstream of a hit at position ``hit``.

    The response starts with a zero counter and adds the weight of every edge
    it crosses. Returns ``(node, counter)`` for positions ``hit - 1 .. 0``.
    """
    counter = 0.0
    out = []
    for k in range(hit - 1, -1, -1):
        counter += topology.edges[(path[k + 1], path[k])]
        out.append((path[k], counter))
    return out


class PgaState:
    """State of gradient ascent at every node, one row per node.

    Period ``k`` (1-based) starts from state ``y^(k)``; ``y^(1)`` is the
    initial state. At the end of the period the sniffed counters are
    averaged over the period length into ``z`` and the state moves to the
    projection of ``y^(k) + gamma_k z``. The marginals used to fill caches
    in period ``k`` are the ``gamma``-weighted average of ``y^(l)`` over
    ``max(1, k // 2) <= l <= k``.
    """

    def __init__(self, dem: Demand, period: float, Y0=None, smoothing: bool = True):
        if period <= 0:
            raise ValueError("period must be positive")
        self.dem = dem
        self.period = float(period)
        self.smoothing = smoothing
        self.y = lexicographic_fill(dem) if Y0 is None else check_marginals(dem, Y0).copy()
        self.k = 1
        self.acc = np.zeros_like(self.y)
        self.z = np.zeros_like(self.y)
        # (index, gamma, state) for the current window
        self._history: list[tuple[int, float, np.ndarray]] = []

    def record(self, node: int, item: int, t: float) -> None:
        self.acc[node, item] += t

    def absorb(self, msg: ControlMessage, stop: int) -> None:
        """Credit the values sniffed on the reverse walk of ``msg``."""
        for node, t in pga_reverse_sniff(msg, self.dem.topology, stop):
            self.acc[node, msg.item] += t

    def control(self, item: int, path) -> None:
        """Send one control message for a request and record what it sniffs."""
        msg = ControlMessage(item, tuple(path))
        stop = pga_forward_control(msg, self.y)
        self.absorb(msg, stop)

    def smoothed(self, gamma_k: float) -> np.ndarray:
        """Marginals for period ``k`` given its step ``gamma_k``."""
        if not self.smoothing:
            return self.y.copy()
        first = max(1, self.k // 2)
        self._history = [h for h in self._history if h[0] >= first]
        if not self._history or self._history[-1][0] != self.k:
            self._history.append((self.k, gamma_k, self.y.copy()))
        weights = np.array([g for _, g, _ in self._history])
        if weights.sum() <= 0:
            return self.y.copy()
        stack = np.stack([s for _, _, s in self._history])
        return np.tensordot(weights / weights.sum(), stack, axes=1)

    def end_period(self, gamma_k: float) -> np.ndarray:
        """Close period ``k``: estimate, step, project. Returns ``z``."""
        self.z = self.acc / self.period
        self.y = project_marginals(self.dem, self.y + gamma_k * self.z)
        check_marginals(self.dem, self.y, tol=1e-7)
        self.acc = np.zeros_like(self.y)
        self.k += 1
        return self.z

    def resample(self, ybar: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Fresh allocation with marginals ``ybar``, drawn node by node."""
        X = np.zeros_like(ybar)
        for v, cap in enumerate(self.dem.capacities):
            X[v] = sample(build_distribution(ybar[v], int(cap)), rng)
        return X


class GrdNode:
    """Greedy path replication at one node.

    ``z`` holds exponentially weighted averages of the counters sniffed on
    responses; all entries decay at rate ``beta`` between updates. The
    evictable part of the cache is always the ``slots`` highest-ranked
    non-source items, ranking by ``z`` descending and then by item id.
    """

    def __init__(self, item_count: int, slots: int, pinned=(), beta: float = 0.1, initial=None):
        if beta < 0:
            raise ValueError("beta must be nonnegative")
        self.z = np.zeros(item_count)
        self.last = 0.0
        self.beta = float(beta)
        self.slots = int(slots)
        self.pinned = frozenset(int(i) for i in pinned)
        if initial is None:
            initial = [i for i in range(item_count) if i not in self.pinned][: self.slots]
        self.cache = set(int(i) for i in initial) - self.pinned
        if len(self.cache) != self.slots:
            raise ValueError("initial cache must fill the evictable slots exactly")

    def contents(self) -> set[int]:
        return self.cache | self.pinned

    def _worst(self) -> int:
        return min(self.cache, key=lambda j: (self.z[j], -j))

    def on_response(self, item: int, t: float, now: float) -> tuple[int, int] | None:
        """Update on a response for ``item`` carrying counter ``t``.

        Returns ``(inserted, evicted)`` when the cache changes.
        """
        if now > self.last:
            self.z *= math.exp(-self.beta * (now - self.last))
            self.last = now
        self.z[item] += self.beta * t
        if item in self.pinned or item in self.cache or self.slots == 0:
            return None
        worst = self._worst()
        if (self.z[item], -item) > (self.z[worst], -worst):
            self.cache.remove(worst)
            self.cache.add(item)
            return item, worst
        return None
