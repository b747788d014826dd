"""Cache network graphs: generators, weights, edge-list I/O and routing.

A :class:`Topology` is a symmetric directed graph. The weight ``w[u, v]`` of a
directed edge is the cost of moving one item from ``u`` to ``v``; requests
travel for free, so routes are chosen by the cost of the *response*, which
traverses the request path backwards.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from importlib import resources
from pathlib import Path

import networkx as nx
import numpy as np

__all__ = [
    "Topology",
    "TopologyError",
    "TOPOLOGY_KINDS",
    "BACKBONES",
    "generate",
    "assign_weights",
    "load",
    "load_backbone",
    "dump",
    "shortest_path",
    "shortest_paths_from",
    "path_cost",
]

TOPOLOGY_KINDS = (
    "cycle",
    "lollipop",
    "grid_2d",
    "balanced_tree",
    "hypercube",
    "expander",
    "erdos_renyi",
    "regular",
    "watts_strogatz",
    "small_world",
    "barabasi_albert",
)

BACKBONES = ("abilene", "geant", "dtelekom")

# Defaults reproduce the sizes used in the evaluation table.
_DEFAULTS = {
    "cycle": {"n": 30},
    "lollipop": {"n": 30},
    "grid_2d": {"side": 10},
    "balanced_tree": {"branching": 2, "depth": 6},
    "hypercube": {"dim": 7},
    "expander": {"m": 10},
    "erdos_renyi": {"n": 100, "p": 0.1},
    "regular": {"n": 100, "degree": 3},
    "watts_strogatz": {"n": 100, "k": 4, "p": 0.1},
    "small_world": {"side": 10, "p": 1, "q": 1, "r": 2},
    "barabasi_albert": {"n": 100, "m": 4},
}

_MAX_RESAMPLES = 100


class TopologyError(ValueError):
    """Invalid generator parameters, malformed edge lists, unreachable nodes."""


@dataclass(frozen=True, eq=False)
class Topology:
    """Symmetric weighted directed graph with per-node cache capacities.

    Parameters
    ----------
    node_count : int
        Number of nodes; nodes are ``0 .. node_count - 1``.
    edges : dict
        Maps each directed edge ``(u, v)`` to its nonnegative weight.
    capacities : numpy.ndarray
        Integer cache capacity of every node (zeros until a demand sets them).
    """

    node_count: int
    edges: dict[tuple[int, int], float]
    capacities: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.node_count < 1:
            raise TopologyError("a topology needs at least one node")
        caps = self.capacities
        if caps is None:
            caps = np.zeros(self.node_count, dtype=int)
        caps = np.asarray(caps, dtype=int)
        if caps.shape != (self.node_count,) or (caps < 0).any():
            raise TopologyError("capacities must be one nonnegative integer per node")
        object.__setattr__(self, "capacities", caps)
        for (u, v), w in self.edges.items():
            if u == v:
                raise TopologyError(f"self-loop at node {u}")
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise TopologyError(f"edge ({u}, {v}) references an unknown node")
            if w < 0 or not math.isfinite(w):
                raise TopologyError(f"edge ({u}, {v}) has invalid weight {w}")
            if (v, u) not in self.edges:
                raise TopologyError(f"edge ({u}, {v}) has no reverse edge")

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        out: list[list[int]] = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            out[u].append(v)
        return tuple(tuple(sorted(n)) for n in out)

    def weight(self, u: int, v: int) -> float:
        return self.edges[(u, v)]

    def with_capacities(self, capacities) -> "Topology":
        return replace(self, capacities=np.asarray(capacities, dtype=int))

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.node_count))
        for (u, v), w in self.edges.items():
            g.add_edge(u, v, weight=w)
        return g


def _from_undirected(g: nx.Graph) -> Topology:
    g = nx.convert_node_labels_to_integers(nx.Graph(g), ordering="sorted")
    edges: dict[tuple[int, int], float] = {}
    for u, v in g.edges():
        if u == v:
            continue
        edges[(u, v)] = 0.0
        edges[(v, u)] = 0.0
    return Topology(g.number_of_nodes(), edges)


def _params(kind: str, params: dict | None) -> dict:
    merged = dict(_DEFAULTS[kind])
    for key, value in (params or {}).items():
        if key not in merged:
            raise TopologyError(f"unknown parameter {key!r} for {kind}; expected one of {sorted(merged)}")
        merged[key] = value
    return merged


def _build(kind: str, p: dict, rng: np.random.Generator) -> nx.Graph:
    seed = int(rng.integers(2**31 - 1))
    if kind == "cycle":
        if p["n"] < 3:
            raise TopologyError("cycle needs n >= 3")
        return nx.cycle_graph(p["n"])
    if kind == "lollipop":
        n = p["n"]
        if n < 4 or n % 2:
            raise TopologyError("lollipop needs an even n >= 4 (clique and path of n/2 nodes)")
        return nx.lollipop_graph(n // 2, n // 2)
    if kind == "grid_2d":
        return nx.grid_2d_graph(p["side"], p["side"])
    if kind == "balanced_tree":
        return nx.balanced_tree(p["branching"], p["depth"])
    if kind == "hypercube":
        return nx.hypercube_graph(p["dim"])
    if kind == "expander":
        # Margulis-Gabber-Galil multigraph on the m x m torus; parallel edges
        # and self-loops are dropped by _from_undirected.
        return nx.Graph(nx.margulis_gabber_galil_graph(p["m"]))
    if kind == "erdos_renyi":
        if not 0 < p["p"] <= 1:
            raise TopologyError("erdos_renyi needs 0 < p <= 1")
        return nx.erdos_renyi_graph(p["n"], p["p"], seed=seed)
    if kind == "regular":
        n, d = p["n"], p["degree"]
        if (n * d) % 2 or d >= n or d < 1:
            raise TopologyError(f"no {d}-regular graph on {n} nodes (n*d must be even and d < n)")
        return nx.random_regular_graph(d, n, seed=seed)
    if kind == "watts_strogatz":
        return nx.watts_strogatz_graph(p["n"], p["k"], p["p"], seed=seed)
    if kind == "small_world":
        g = nx.navigable_small_world_graph(p["side"], p=p["p"], q=p["q"], r=p["r"], dim=2, seed=seed)
        return g.to_undirected()
    if kind == "barabasi_albert":
        return nx.barabasi_albert_graph(p["n"], p["m"], seed=seed)
    raise TopologyError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")


def generate(kind: str, params: dict | None = None, seed: int | None = 0) -> Topology:
    """Generate one of the evaluation topologies.

    Random kinds are resampled (deterministically, from the same seed) until
    the graph is connected. Weights are left at zero; see
    :func:`assign_weights`.
    """
    if kind not in _DEFAULTS:
        raise TopologyError(f"unknown topology kind {kind!r}; expected one of {TOPOLOGY_KINDS}")
    p = _params(kind, params)
    rng = np.random.default_rng(seed)
    for _ in range(_MAX_RESAMPLES):
        try:
            g = _build(kind, p, rng)
        except nx.NetworkXError as exc:
            raise TopologyError(str(exc)) from exc
        if g.number_of_nodes() > 0 and nx.is_connected(nx.Graph(g)):
            return _from_undirected(g)
    raise TopologyError(f"could not sample a connected {kind} graph with {p}")


def assign_weights(topo: Topology, low: float = 1.0, high: float = 100.0, seed: int | None = 0) -> Topology:
    """Draw every directed edge weight independently from U[low, high]."""
    if low > high:
        raise TopologyError(f"empty weight interval [{low}, {high}]")
    rng = np.random.default_rng(seed)
    keys = sorted(topo.edges)
    draws = rng.uniform(low, high, size=len(keys)) if low < high else np.full(len(keys), float(low))
    return replace(topo, edges={k: float(w) for k, w in zip(keys, draws)})


def _parse(lines, source: str) -> Topology:
    node_count = None
    edges: dict[tuple[int, int], float] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if node_count is None:
            if len(parts) != 2 or parts[0] != "nodes":
                raise TopologyError(f"{source}:{lineno}: expected header 'nodes <N>'")
            try:
                node_count = int(parts[1])
            except ValueError:
                raise TopologyError(f"{source}:{lineno}: bad node count {parts[1]!r}") from None
            if node_count < 1:
                raise TopologyError(f"{source}:{lineno}: node count must be positive")
            continue
        if len(parts) != 3:
            raise TopologyError(f"{source}:{lineno}: expected 'u v w'")
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise TopologyError(f"{source}:{lineno}: cannot parse edge {line!r}") from None
        if not (0 <= u < node_count and 0 <= v < node_count):
            raise TopologyError(f"{source}:{lineno}: node id out of range")
        if u == v:
            raise TopologyError(f"{source}:{lineno}: self-loop")
        if w < 0 or not math.isfinite(w):
            raise TopologyError(f"{source}:{lineno}: invalid weight {w}")
        if (u, v) in edges:
            raise TopologyError(f"{source}:{lineno}: duplicate edge ({u}, {v})")
        edges[(u, v)] = w
    if node_count is None:
        raise TopologyError(f"{source}: empty edge list")
    for (u, v), w in list(edges.items()):
        edges.setdefault((v, u), w)
    return Topology(node_count, edges)


def load(path: str | Path) -> Topology:
    """Read an edge-list file (``nodes N`` header, then ``u v w`` lines).

    Missing reverse edges are added with the forward weight.
    """
    path = Path(path)
    with path.open() as fh:
        return _parse(fh, str(path))


def load_backbone(name: str) -> Topology:
    """Load one of the bundled backbone networks (abilene, geant, dtelekom)."""
    if name not in BACKBONES:
        raise TopologyError(f"unknown backbone {name!r}; expected one of {BACKBONES}")
    text = resources.files("cachenet").joinpath("data", f"{name}.txt").read_text()
    return _parse(text.splitlines(), name)


def dump(topo: Topology, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write(f"nodes {topo.node_count}\n")
        for (u, v) in sorted(topo.edges):
            fh.write(f"{u} {v} {topo.edges[(u, v)]!r}\n")


def path_cost(topo: Topology, path) -> float:
    """Cost of a response travelling ``path`` backwards, from its end to its start."""
    return float(sum(topo.edges[(path[k + 1], path[k])] for k in range(len(path) - 1)))


def shortest_paths_from(topo: Topology, origin: int) -> dict[int, tuple[int, ...]]:
    """Cheapest request paths from ``origin`` to every reachable node.

    Hopping ``u -> v`` costs ``w[v, u]``. Ties are broken by hop count and
    then by the lexicographically smallest node sequence, so results do not
    depend on dict or heap ordering.
    """
    if not 0 <= origin < topo.node_count:
        raise TopologyError(f"unknown node {origin}")
    best: dict[int, tuple[int, ...]] = {}
    heap: list[tuple[float, int, tuple[int, ...]]] = [(0.0, 0, (origin,))]
    while heap:
        cost, hops, path = heapq.heappop(heap)
        node = path[-1]
        if node in best:
            continue
        best[node] = path
        for nxt in topo.neighbors[node]:
            if nxt not in best:
                heapq.heappush(heap, (cost + topo.edges[(nxt, node)], hops + 1, path + (nxt,)))
    return best


def shortest_path(topo: Topology, source: int, target: int) -> tuple[int, ...]:
    paths = shortest_paths_from(topo, source)
    if target not in paths:
        raise TopologyError(f"node {target} is unreachable from {source}")
    return paths[target]
