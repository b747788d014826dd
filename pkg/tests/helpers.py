"""Shared oracles and instance builders for the test-suite."""
import itertools

import numpy as np

from cachenet.demand import Catalog, Demand, Request
from cachenet.objective import uniform_marginals
from cachenet.relaxation import project_marginals
from cachenet.scenarios import random_instance
from cachenet.topology import Topology


def random_marginals(dem, rng):
    """A random point of the relaxed domain."""
    Z = uniform_marginals(dem) + rng.normal(0, 1.0, size=(dem.node_count, dem.item_count))
    return project_marginals(dem, Z)


def tiny_instance(seed):
    return random_instance(seed, max_nodes=5, max_items=3, max_slots=2, max_requests=8)


def single_cache(weights=(5.0, 3.0)):
    """Cache node 0 with one slot, item 0 sourced at node 1, item 1 at node 2."""
    edges = {(1, 0): weights[0], (0, 1): weights[0], (2, 0): weights[1], (0, 2): weights[1]}
    topo = Topology(3, edges, capacities=[1, 1, 1])
    catalog = Catalog(2, (frozenset([1]), frozenset([2])))
    return Demand((Request(0, (0, 1)), Request(1, (0, 2))), catalog, topo)


def naive_gain(dem, X):
    """Caching gain by walking every request path with explicit loops."""
    total = 0.0
    for req in dem.requests:
        miss = 1.0
        for k in range(len(req.path) - 1):
            miss *= 1.0 - X[req.path[k]][req.item]
            w = dem.topology.edges[(req.path[k + 1], req.path[k])]
            total += req.rate * w * (1.0 - miss)
    return total


def naive_concave(dem, Y):
    total = 0.0
    for req in dem.requests:
        cover = 0.0
        for k in range(len(req.path) - 1):
            cover += Y[req.path[k]][req.item]
            w = dem.topology.edges[(req.path[k + 1], req.path[k])]
            total += req.rate * w * min(1.0, cover)
    return total


def all_allocations(dem):
    """Every feasible 0/1 allocation, by brute enumeration of all matrices."""
    n, c = dem.node_count, dem.item_count
    for bits in itertools.product((0.0, 1.0), repeat=n * c):
        X = np.array(bits).reshape(n, c)
        if (X.sum(axis=1) == dem.capacities).all() and (X[dem.sources] == 1).all():
            yield X


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []
