"""Caching gain, its relaxations, supergradients and an exhaustive oracle.

Allocations ``X`` and marginals ``Y`` are plain ``(|V|, |C|)`` numpy arrays.
Every evaluation function also accepts stacks of shape ``(..., |V|, |C|)``
and returns one value per leading index.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .demand import Demand, Request, upper_bound_cost

__all__ = [
    "TOL",
    "FeasibilityError",
    "SubgradientBox",
    "check_allocation",
    "check_marginals",
    "is_allocation",
    "is_marginals",
    "sources_only",
    "uniform_marginals",
    "lexicographic_fill",
    "request_cost",
    "caching_gain",
    "multilinear_gain",
    "concave_gain",
    "subgradient_box",
    "brute_force_opt",
]

TOL = 1e-9


class FeasibilityError(ValueError):
    pass


def check_marginals(dem: Demand, Y, tol: float = TOL) -> np.ndarray:
    """Return ``Y`` as a float array, raising unless it lies in the relaxed domain."""
    Y = np.asarray(Y, dtype=float)
    shape = (dem.node_count, dem.item_count)
    if Y.shape != shape:
        raise FeasibilityError(f"expected shape {shape}, got {Y.shape}")
    if (Y < -tol).any() or (Y > 1 + tol).any():
        raise FeasibilityError("marginals must lie in [0, 1]")
    gap = np.abs(Y.sum(axis=1) - dem.capacities)
    if (gap > tol * max(1, dem.item_count)).any():
        v = int(np.argmax(gap))
        raise FeasibilityError(f"node {v} holds {Y[v].sum()} items in expectation, capacity {dem.capacities[v]}")
    if (Y[dem.sources] < 1 - tol).any():
        raise FeasibilityError("source items must have marginal 1")
    return Y


def check_allocation(dem: Demand, X) -> np.ndarray:
    X = np.asarray(X)
    if not np.isin(X, (0, 1)).all():
        raise FeasibilityError("allocation entries must be 0 or 1")
    check_marginals(dem, X, tol=0.0)
    return X.astype(float)


def is_marginals(dem: Demand, Y, tol: float = TOL) -> bool:
    try:
        check_marginals(dem, Y, tol)
    except FeasibilityError:
        return False
    return True


def is_allocation(dem: Demand, X) -> bool:
    try:
        check_allocation(dem, X)
    except FeasibilityError:
        return False
    return True


def sources_only(dem: Demand) -> np.ndarray:
    """Source placements alone (infeasible unless every node is already full)."""
    return dem.sources.astype(float)


def uniform_marginals(dem: Demand) -> np.ndarray:
    """Spread each node's free capacity evenly over its non-source items."""
    Y = sources_only(dem)
    free = dem.free_slots
    for v in range(dem.node_count):
        others = ~dem.sources[v]
        if free[v] > 0:
            Y[v, others] = free[v] / others.sum()
    return Y


def lexicographic_fill(dem: Demand) -> np.ndarray:
    """Sources plus the lowest-numbered non-source items up to capacity."""
    X = sources_only(dem)
    for v in range(dem.node_count):
        others = np.flatnonzero(~dem.sources[v])[: dem.free_slots[v]]
        X[v, others] = 1.0
    return X


def request_cost(dem: Demand, X, req: Request) -> float:
    """Cost of serving one request under allocation ``X``."""
    X = np.asarray(X)
    cost = 0.0
    miss = 1.0
    path = req.path
    for k in range(len(path) - 1):
        miss *= 1.0 - X[path[k], req.item]
        cost += dem.topology.edges[(path[k + 1], path[k])] * miss
    return cost


def multilinear_gain(dem: Demand, Y) -> np.ndarray | float:
    """Expected gain when nodes hold items independently with marginals ``Y``."""
    c = dem.compiled
    Y = np.asarray(Y, dtype=float)
    if not len(c.rates):
        return np.zeros(Y.shape[:-2]) if Y.ndim > 2 else 0.0
    miss = np.cumprod(1.0 - c.gather(Y), axis=-1)
    gain = ((1.0 - miss) * c.rated_weights * c.mask).sum(axis=(-1, -2))
    return float(gain) if np.ndim(gain) == 0 else gain


def caching_gain(dem: Demand, X) -> np.ndarray | float:
    """Reduction of the expected routing cost due to caching.

    On 0/1 inputs this is the combinatorial objective; it coincides with
    :func:`multilinear_gain` there.
    """
    return multilinear_gain(dem, X)


def concave_gain(dem: Demand, Y) -> np.ndarray | float:
    """Concave upper bound obtained by replacing ``1 - prod(1 - y)`` with ``min(1, sum y)``."""
    c = dem.compiled
    Y = np.asarray(Y, dtype=float)
    if not len(c.rates):
        return np.zeros(Y.shape[:-2]) if Y.ndim > 2 else 0.0
    covered = np.minimum(1.0, np.cumsum(c.gather(Y), axis=-1))
    gain = (covered * c.rated_weights * c.mask).sum(axis=(-1, -2))
    return float(gain) if np.ndim(gain) == 0 else gain


@dataclass(frozen=True, eq=False)
class SubgradientBox:
    """Coordinatewise bounds of the supergradient set of the concave relaxation.

    ``upper`` counts edge terms whose partial coverage is at most 1 and
    ``lower`` those whose coverage is strictly below 1.
    """

    lower: np.ndarray
    upper: np.ndarray

    def contains(self, z, tol: float = TOL) -> bool:
        z = np.asarray(z)
        return bool(((z >= self.lower - tol) & (z <= self.upper + tol)).all())


def _suffix_scatter(dem: Demand, terms: np.ndarray) -> np.ndarray:
    """Add, for every path position, the sum of ``terms`` from that position on."""
    c = dem.compiled
    suffix = np.cumsum(terms[:, ::-1], axis=1)[:, ::-1]
    flat = c.nodes * dem.item_count + c.items[:, None]
    size = dem.node_count * dem.item_count
    out = np.bincount(flat[c.mask], weights=suffix[c.mask], minlength=size)
    return out.reshape(dem.node_count, dem.item_count)


def subgradient_box(dem: Demand, Y, tol: float = TOL) -> SubgradientBox:
    c = dem.compiled
    Y = np.asarray(Y, dtype=float)
    if not len(c.rates):
        zero = np.zeros((dem.node_count, dem.item_count))
        return SubgradientBox(zero, zero.copy())
    cover = np.cumsum(c.gather(Y), axis=-1)
    weighted = c.rated_weights * c.mask
    upper = _suffix_scatter(dem, weighted * (cover <= 1.0 + tol))
    lower = _suffix_scatter(dem, weighted * (cover < 1.0 - tol))
    return SubgradientBox(lower, upper)


def _node_choices(dem: Demand, v: int) -> list[tuple[int, ...]]:
    free = [i for i in range(dem.item_count) if not dem.sources[v, i]]
    return list(itertools.combinations(free, int(dem.free_slots[v])))


def brute_force_opt(dem: Demand, limit: int = 10**6, batch: int = 4096) -> tuple[np.ndarray, float]:
    """Exhaustive maximiser of the caching gain over feasible allocations.

    Candidates are visited in lexicographic order of per-node item tuples and
    only a strictly better value replaces the incumbent, so ties resolve to
    the lexicographically first allocation.
    """
    if (dem.free_slots < 0).any():
        raise FeasibilityError("sources exceed capacity")
    choices = [_node_choices(dem, v) for v in range(dem.node_count)]
    total = math.prod(len(ch) for ch in choices)
    if total == 0:
        raise FeasibilityError("some node has more free slots than non-source items")
    if total > limit:
        raise ValueError(f"{total} feasible allocations exceed the enumeration limit {limit}")
    base = sources_only(dem)
    best_x, best_f = base.copy(), -math.inf
    combos = itertools.product(*choices)
    while True:
        chunk = list(itertools.islice(combos, batch))
        if not chunk:
            break
        stack = np.repeat(base[None], len(chunk), axis=0)
        for b, combo in enumerate(chunk):
            for v, items in enumerate(combo):
                stack[b, v, list(items)] = 1.0
        values = np.atleast_1d(caching_gain(dem, stack))
        j = int(np.argmax(values))
        if values[j] > best_f + 1e-12:
            best_f, best_x = float(values[j]), stack[j].copy()
    return best_x, best_f


def total_cost(dem: Demand, X) -> float:
    """Expected routing cost per unit time, ``C0 - F(X)``."""
    return upper_bound_cost(dem) - float(caching_gain(dem, X))
