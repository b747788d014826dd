"""Content placement in networks of caches: offline approximation,
adaptive distributed algorithms and a discrete-event simulator."""

from .demand import Catalog, Demand, Request, generate_demand
from .objective import caching_gain, concave_gain, multilinear_gain
from .relaxation import greedy_offline, maximize_L, pipage_round
from .rounding import build_distribution, sample_global
from .scenarios import RECIPES, build_instance, star
from .sim import make_policy, mean_ecg, run, tacg
from .topology import Topology, generate

__version__ = "0.1.0"

__all__ = [
    "Catalog",
    "Demand",
    "Request",
    "Topology",
    "RECIPES",
    "build_distribution",
    "build_instance",
    "caching_gain",
    "concave_gain",
    "generate",
    "generate_demand",
    "greedy_offline",
    "make_policy",
    "maximize_L",
    "mean_ecg",
    "multilinear_gain",
    "pipage_round",
    "run",
    "sample_global",
    "star",
    "tacg",
]
