"""Feasible randomized rounding of per-node marginals.

:func:`build_distribution` lays the marginals of one cache side by side on
``c`` unit-length rows (wrapping at the end of each row), cuts the stack
vertically at every point where two items meet, and reads one item per row
off each vertical slab. Each slab is a set of exactly ``c`` distinct items
whose probability is the slab width, and item ``i`` is covered by slabs of
total width ``ybar[i]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NodeDistribution",
    "RoundingError",
    "build_distribution",
    "sample",
    "sample_global",
    "global_distributions",
]

SUM_TOL = 1e-6
CUT_TOL = 1e-12


class RoundingError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class NodeDistribution:
    """Finite distribution over item sets of one cache.

    ``support[k]`` is a boolean item vector with exactly ``capacity`` ones,
    drawn with probability ``probs[k]``.
    """

    support: np.ndarray
    probs: np.ndarray

    @property
    def capacity(self) -> int:
        return int(self.support[0].sum()) if len(self.support) else 0

    def marginals(self) -> np.ndarray:
        return self.probs @ self.support

    def sets(self) -> list[frozenset[int]]:
        return [frozenset(np.flatnonzero(row).tolist()) for row in self.support]


def build_distribution(ybar, capacity: int) -> NodeDistribution:
    ybar = np.asarray(ybar, dtype=float)
    n = ybar.size
    if ((ybar < -CUT_TOL) | (ybar > 1 + CUT_TOL)).any():
        raise RoundingError("marginals must lie in [0, 1]")
    total = ybar.sum()
    if abs(total - capacity) > SUM_TOL:
        raise RoundingError(f"marginals sum to {total}, expected capacity {capacity}")
    if capacity == 0:
        return NodeDistribution(np.zeros((1, n), dtype=bool), np.ones(1))

    # Prefix sums, rescaled so the last one is exactly the capacity.
    ends = np.cumsum(np.clip(ybar, 0.0, 1.0))
    ends *= capacity / ends[-1]
    ends[-1] = capacity
    starts = np.concatenate(([0.0], ends[:-1]))

    frac = ends - np.floor(ends)
    frac[(frac < CUT_TOL) | (frac > 1 - CUT_TOL)] = 0.0
    cuts = [0.0]
    for tau in np.sort(frac):
        if tau - cuts[-1] > CUT_TOL:
            cuts.append(float(tau))
    cuts.append(1.0)

    support, probs = [], []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo < CUT_TOL:
            continue
        x = np.zeros(n, dtype=bool)
        for row in range(capacity):
            mid = row + 0.5 * (lo + hi)
            i = int(np.searchsorted(ends, mid, side="right"))
            i = min(i, n - 1)
            # The whole slab (row+lo, row+hi) must sit inside item i's segment.
            if not (starts[i] <= row + lo + 1e-9 and row + hi <= ends[i] + 1e-9):
                raise AssertionError(f"slab ({row + lo}, {row + hi}) not covered by a single item")
            if x[i]:
                raise AssertionError(f"item {i} covers two rows of one slab")
            x[i] = True
        support.append(x)
        probs.append(hi - lo)
    support_arr = np.array(support)
    probs_arr = np.array(probs)
    return NodeDistribution(support_arr, probs_arr / probs_arr.sum())


def sample(dist: NodeDistribution, rng: np.random.Generator, size=None) -> np.ndarray:
    """Draw item vectors from ``dist``; returns shape ``(|C|,)`` or ``(size, |C|)``."""
    cdf = np.cumsum(dist.probs)
    cdf[-1] = 1.0
    k = np.searchsorted(cdf, rng.random(size), side="right")
    return dist.support[np.minimum(k, len(cdf) - 1)]


def global_distributions(Y, capacities) -> list[NodeDistribution]:
    Y = np.asarray(Y, dtype=float)
    return [build_distribution(Y[v], int(c)) for v, c in enumerate(capacities)]


def sample_global(Y, capacities, rng: np.random.Generator, size=None, dists=None) -> np.ndarray:
    """Sample every cache independently from its own marginals.

    Returns a float allocation matrix, or a stack of ``size`` of them.
    """
    if dists is None:
        dists = global_distributions(Y, capacities)
    rows = [sample(d, rng, size) for d in dists]
    axis = 0 if size is None else 1
    return np.stack(rows, axis=axis).astype(float)
