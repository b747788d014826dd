"""Canned instances: the four-node star and the evaluation-table recipes."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .demand import Catalog, Demand, Request, generate_demand
from .topology import BACKBONES, Topology, assign_weights, generate, load_backbone

__all__ = [
    "STAR_U",
    "STAR_V",
    "STAR_S1",
    "STAR_S2",
    "star",
    "star_lru_gain",
    "star_ratio_bound",
    "Recipe",
    "RECIPES",
    "get_recipe",
    "build_instance",
    "random_instance",
]

STAR_U, STAR_V, STAR_S1, STAR_S2 = 0, 1, 2, 3


def star(M: float = 100.0, alpha: float = 0.1) -> Demand:
    """Origin ``u`` behind a single-slot cache ``v``, with item 0 sourced one
    unit away and item 1 sourced ``M`` away.

    ``u`` asks for item 0 at rate ``1 - alpha`` and for item 1 at rate ``alpha``.
    """
    if not M > 1:
        raise ValueError("M must exceed 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    u, v, s1, s2 = STAR_U, STAR_V, STAR_S1, STAR_S2
    edges = {
        (v, u): 1.0, (u, v): 1.0,
        (s1, v): 1.0, (v, s1): 1.0,
        (s2, v): float(M), (v, s2): float(M),
    }
    topo = Topology(4, edges, capacities=[0, 1, 1, 1])
    catalog = Catalog(2, (frozenset([s1]), frozenset([s2])))
    requests = (
        Request(0, (u, v, s1), 1.0 - alpha),
        Request(1, (u, v, s2), alpha),
    )
    return Demand(requests, catalog, topo)


def star_lru_gain(M: float, alpha: float) -> float:
    """Steady-state expected gain of path replication with LRU on the star."""
    return alpha**2 * M + 1 - 2 * alpha + alpha**2


def star_ratio_bound(M: float, alpha: float) -> float:
    """Upper bound on the LRU-to-optimal gain ratio on the star."""
    return alpha + (1 - alpha) ** 2 / (alpha * M)


@dataclass(frozen=True)
class Recipe:
    """One evaluation-table row: topology plus workload parameters."""

    name: str
    kind: str
    params: dict = field(default_factory=dict)
    item_count: int = 10
    request_count: int = 100
    query_count: int = 10
    cache_slots: int = 2
    zipf: float = 1.2
    weight_low: float = 1.0
    weight_high: float = 100.0
    horizon: float = 5000.0

    def scaled(self, **changes) -> "Recipe":
        return replace(self, **changes)


def _big(name: str, kind: str, **params) -> Recipe:
    return Recipe(name, kind, params, item_count=300, request_count=1000, query_count=20, cache_slots=3)


def _small(name: str, kind: str, **params) -> Recipe:
    return Recipe(name, kind, params, item_count=10, request_count=100, query_count=10, cache_slots=2)


RECIPES: dict[str, Recipe] = {
    r.name: r
    for r in (
        _small("cycle", "cycle", n=30),
        _small("lollipop", "lollipop", n=30),
        _big("grid_2d", "grid_2d", side=10),
        _big("balanced_tree", "balanced_tree", branching=2, depth=6),
        _big("hypercube", "hypercube", dim=7),
        _big("expander", "expander", m=10),
        _big("erdos_renyi", "erdos_renyi", n=100, p=0.1),
        _big("regular", "regular", n=100, degree=3),
        _big("watts_strogatz", "watts_strogatz", n=100, k=4, p=0.1),
        _big("small_world", "small_world", side=10),
        _big("barabasi_albert", "barabasi_albert", n=100, m=4),
        _small("geant", "geant"),
        _small("abilene", "abilene"),
        _big("dtelekom", "dtelekom"),
    )
}


def get_recipe(name: str, seed: int | None = None) -> Recipe:
    """Look up an evaluation-table row by topology name.

    ``seed`` is accepted for symmetry with :func:`build_instance`; recipes
    themselves are seed-free.
    """
    try:
        return RECIPES[name]
    except KeyError:
        raise KeyError(f"unknown recipe {name!r}; expected one of {sorted(RECIPES)}") from None


def build_instance(recipe: Recipe, seed: int = 0) -> Demand:
    """Topology, weights, sources and requests for one seeded instance."""
    if recipe.kind in BACKBONES:
        topo = load_backbone(recipe.kind)
    else:
        topo = generate(recipe.kind, recipe.params, seed=seed)
    topo = assign_weights(topo, recipe.weight_low, recipe.weight_high, seed=seed + 1)
    query_count = min(recipe.query_count, topo.node_count)
    return generate_demand(
        topo,
        recipe.item_count,
        query_count,
        recipe.request_count,
        zipf_s=recipe.zipf,
        seed=seed + 2,
        cache_slots=recipe.cache_slots,
    )


def random_instance(
    seed: int,
    max_nodes: int = 6,
    max_items: int = 4,
    max_slots: int = 2,
    max_requests: int = 12,
) -> Demand:
    """Small random instance on a connected Erdos-Renyi graph.

    Sizes are drawn uniformly up to the given maxima; every node may issue
    requests. Meant for exhaustive cross-checks, so keep the maxima small.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, max_nodes + 1))
    items = int(rng.integers(2, max_items + 1))
    topo = generate("erdos_renyi", {"n": n, "p": 0.5}, seed=seed)
    topo = assign_weights(topo, 1.0, 100.0, seed=seed + 1)
    return generate_demand(
        topo,
        items,
        n,
        int(rng.integers(1, max_requests + 1)),
        zipf_s=float(rng.uniform(0.5, 1.5)),
        seed=seed + 2,
        cache_slots=int(rng.integers(1, max_slots + 1)),
    )
