"""Catalogs, designated sources and request workloads.

Items are numbered ``0 .. item_count - 1``; Zipf popularity rank ``r`` maps
to item ``r - 1``, so item 0 is the most popular one.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .topology import Topology, TopologyError, shortest_paths_from

__all__ = [
    "Catalog",
    "Request",
    "Demand",
    "DemandError",
    "CompiledDemand",
    "validate_well_routed",
    "zipf_pmf",
    "sample_zipf",
    "generate_demand",
    "upper_bound_cost",
    "format_requests",
    "parse_requests",
]


class DemandError(ValueError):
    pass


@dataclass(frozen=True)
class Catalog:
    item_count: int
    sources: tuple[frozenset[int], ...]

    def __post_init__(self):
        if self.item_count < 1:
            raise DemandError("catalog must contain at least one item")
        if len(self.sources) != self.item_count:
            raise DemandError("need one source set per item")
        if any(not s for s in self.sources):
            raise DemandError("every item needs at least one designated source")

    def items_at(self, node: int) -> list[int]:
        """Items permanently stored at ``node``."""
        return [i for i, s in enumerate(self.sources) if node in s]

    def source_matrix(self, node_count: int) -> np.ndarray:
        m = np.zeros((node_count, self.item_count), dtype=bool)
        for i, s in enumerate(self.sources):
            for v in s:
                m[v, i] = True
        return m

    def check_capacities(self, capacities) -> None:
        counts = self.source_matrix(len(capacities)).sum(axis=1)
        bad = np.flatnonzero(counts > np.asarray(capacities))
        if bad.size:
            raise DemandError(f"node {bad[0]} cannot hold its {counts[bad[0]]} source items")


@dataclass(frozen=True)
class Request:
    item: int
    path: tuple[int, ...]
    rate: float = 1.0


def validate_well_routed(req: Request, catalog: Catalog) -> bool:
    """Simple path, ends at a source of the item, no earlier source on it."""
    path = req.path
    if not path or len(set(path)) != len(path):
        return False
    if not 0 <= req.item < catalog.item_count:
        return False
    sources = catalog.sources[req.item]
    return path[-1] in sources and not any(v in sources for v in path[:-1])


class CompiledDemand:
    """Padded numpy view of a request set used by the vectorised objectives.

    Row ``r`` describes request ``r``: ``nodes[r, k]`` is the ``k``-th node on
    the path (excluding the source), ``weights[r, k]`` the weight of the edge
    the response crosses to reach it, and ``mask[r, k]`` marks real entries.
    """

    def __init__(self, requests, topology: Topology):
        rows = len(requests)
        width = max((len(r.path) - 1 for r in requests), default=0)
        width = max(width, 1)
        self.items = np.array([r.item for r in requests], dtype=np.intp)
        self.rates = np.array([r.rate for r in requests], dtype=float)
        self.nodes = np.zeros((rows, width), dtype=np.intp)
        self.weights = np.zeros((rows, width))
        self.mask = np.zeros((rows, width), dtype=bool)
        self.lengths = np.zeros(rows, dtype=np.intp)
        for r, req in enumerate(requests):
            hops = len(req.path) - 1
            self.lengths[r] = hops
            for k in range(hops):
                self.nodes[r, k] = req.path[k]
                self.weights[r, k] = topology.edges[(req.path[k + 1], req.path[k])]
            self.mask[r, :hops] = True
        self.rated_weights = self.rates[:, None] * self.weights

    def gather(self, Y: np.ndarray) -> np.ndarray:
        """``Y[..., p_k, i]`` for every request and path position."""
        return Y[..., self.nodes, self.items[:, None]]


@dataclass(frozen=True, eq=False)
class Demand:
    requests: tuple[Request, ...]
    catalog: Catalog
    topology: Topology

    def __post_init__(self):
        object.__setattr__(self, "requests", tuple(self.requests))
        self.catalog.check_capacities(self.topology.capacities)
        for req in self.requests:
            if not validate_well_routed(req, self.catalog):
                raise DemandError(f"request {req} is not well-routed")
            if req.rate <= 0:
                raise DemandError(f"request {req} has nonpositive rate")
            for a, b in zip(req.path, req.path[1:]):
                if (a, b) not in self.topology.edges:
                    raise DemandError(f"request {req} uses missing edge ({a}, {b})")

    @property
    def node_count(self) -> int:
        return self.topology.node_count

    @property
    def item_count(self) -> int:
        return self.catalog.item_count

    @property
    def capacities(self) -> np.ndarray:
        return self.topology.capacities

    @cached_property
    def sources(self) -> np.ndarray:
        """Boolean (|V|, |C|) matrix of permanent placements."""
        return self.catalog.source_matrix(self.node_count)

    @cached_property
    def free_slots(self) -> np.ndarray:
        """Evictable capacity of every node."""
        return self.capacities - self.sources.sum(axis=1)

    @cached_property
    def compiled(self) -> CompiledDemand:
        return CompiledDemand(self.requests, self.topology)

    @property
    def total_rate(self) -> float:
        return float(sum(r.rate for r in self.requests))


def zipf_pmf(item_count: int, exponent: float) -> np.ndarray:
    ranks = np.arange(1, item_count + 1, dtype=float)
    weights = ranks ** -float(exponent)
    return weights / weights.sum()


def sample_zipf(rng: np.random.Generator, item_count: int, exponent: float, size=None):
    """Draw 0-based item ids with Zipf(exponent) popularity."""
    cdf = np.cumsum(zipf_pmf(item_count, exponent))
    cdf[-1] = 1.0
    return np.searchsorted(cdf, rng.random(size), side="right")


def generate_demand(
    topo: Topology,
    item_count: int,
    query_count: int,
    request_count: int,
    zipf_s: float = 1.2,
    seed: int | None = 0,
    cache_slots: int = 0,
) -> Demand:
    """Random workload on ``topo``.

    Each item gets one source drawn uniformly from the nodes. ``query_count``
    distinct nodes issue requests; each request picks its origin uniformly
    among them and its item by Zipf popularity, and follows the cheapest
    response path to the item's source. Draws whose origin is the source are
    redrawn. Identical (item, path) pairs are merged by adding their unit
    rates. Every node gets ``cache_slots`` evictable slots on top of the
    items it sources, capped by the number of items it does not source.
    """
    n = topo.node_count
    if not 1 <= query_count <= n:
        raise DemandError(f"query_count must be in [1, {n}]")
    if request_count < 1:
        raise DemandError("request_count must be positive")
    if cache_slots < 0:
        raise DemandError("cache_slots must be nonnegative")
    rng = np.random.default_rng(seed)
    source_of = rng.integers(0, n, size=item_count)
    catalog = Catalog(item_count, tuple(frozenset([int(s)]) for s in source_of))
    queries = np.sort(rng.choice(n, size=query_count, replace=False))

    routes: dict[int, dict[int, tuple[int, ...]]] = {}
    merged: OrderedDict[tuple[int, tuple[int, ...]], float] = OrderedDict()
    accepted = attempts = 0
    max_attempts = 100 * request_count
    while accepted < request_count:
        attempts += 1
        if attempts > max_attempts:
            raise DemandError(
                f"only {accepted} of {request_count} requests could be routed after {max_attempts} draws"
            )
        origin = int(queries[rng.integers(query_count)])
        item = int(sample_zipf(rng, item_count, zipf_s))
        source = int(source_of[item])
        if origin == source:
            continue
        if origin not in routes:
            routes[origin] = shortest_paths_from(topo, origin)
        path = routes[origin].get(source)
        if path is None:
            continue
        merged[(item, path)] = merged.get((item, path), 0.0) + 1.0
        accepted += 1

    counts = np.bincount(source_of, minlength=n)
    topo = topo.with_capacities(counts + np.minimum(cache_slots, item_count - counts))
    requests = tuple(Request(i, p, rate) for (i, p), rate in merged.items())
    return Demand(requests, catalog, topo)


def upper_bound_cost(dem: Demand) -> float:
    """Expected cost per unit time when every request is served by its source."""
    c = dem.compiled
    return float((c.rated_weights * c.mask).sum())


def format_requests(dem: Demand) -> str:
    """One line per request: ``item origin n2 ... nk rate``."""
    lines = []
    for r in dem.requests:
        lines.append(" ".join([str(r.item), *map(str, r.path), repr(r.rate)]))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_requests(text: str, catalog: Catalog, topology: Topology) -> Demand:
    requests = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 3:
            raise DemandError(f"line {lineno}: expected 'item origin ... rate'")
        try:
            item = int(parts[0])
            path = tuple(int(p) for p in parts[1:-1])
            rate = float(parts[-1])
        except ValueError:
            raise DemandError(f"line {lineno}: cannot parse {line!r}") from None
        requests.append(Request(item, path, rate))
    try:
        return Demand(tuple(requests), catalog, topology)
    except TopologyError as exc:
        raise DemandError(str(exc)) from exc
