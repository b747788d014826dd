"""Discrete-event simulation of a caching network.

Requests arrive as independent Poisson streams, one per (item, path) pair,
and walk their path until the first node holding the item. The response
walks back instantly, and the policy reacts to it node by node. An
independent rate-1 Poisson stream of measurement epochs samples the
expected caching gain of the current allocation (ECG); by PASTA these
samples see time averages. TACG is the cost saved by caching so far,
divided by elapsed time.
"""
from __future__ import annotations

import bisect
import csv
import heapq
import re
from array import array
from dataclasses import dataclass, field

import numpy as np

from .adaptive import GrdNode, PgaState, grd_weight_counter
from .baselines import POLICIES, ClassicCache
from .demand import Demand
from .objective import check_allocation, lexicographic_fill, multilinear_gain
from .relaxation import inverse_sqrt, theoretical_bounds

__all__ = [
    "PERIOD",
    "ARRIVAL",
    "MEASUREMENT",
    "MetricsLog",
    "Policy",
    "StaticPolicy",
    "PathReplication",
    "GreedyReplication",
    "GradientAscent",
    "POLICY_NAMES",
    "make_policy",
    "run",
    "tacg",
    "mean_ecg",
    "write_metrics_csv",
    "write_pga_dump",
]

# Event kinds double as tie-break priorities.
PERIOD, ARRIVAL, MEASUREMENT = 0, 1, 2

POLICY_NAMES = (*POLICIES, "GRD", "PGA<T>")
_PGA = re.compile(r"^PGA(\d+(?:\.\d+)?)$")

_BLOCK = 4096


@dataclass
class MetricsLog:
    """What one run records.

    ``ecg_times``/``ecg``/``tacg_samples`` are taken at measurement epochs.
    ``arrival_times`` and ``saved_cumulative`` allow TACG at any time.
    """

    ecg_times: list = field(default_factory=list)
    ecg: list = field(default_factory=list)
    tacg_samples: list = field(default_factory=list)
    arrival_times: array = field(default_factory=lambda: array("d"))
    saved_cumulative: array = field(default_factory=lambda: array("d"))
    saved_cost_accum: float = 0.0
    refill_cost: float = 0.0
    served_count: int = 0
    elapsed: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, MetricsLog):
            return NotImplemented
        return (
            self.ecg_times == other.ecg_times
            and self.ecg == other.ecg
            and self.tacg_samples == other.tacg_samples
            and self.arrival_times == other.arrival_times
            and self.saved_cumulative == other.saved_cumulative
            and self.refill_cost == other.refill_cost
            and self.served_count == other.served_count
            and self.elapsed == other.elapsed
        )


def tacg(log: MetricsLog, at: float) -> float:
    """Saved cost per unit time over ``[0, at]``."""
    if at <= 0:
        raise ValueError("TACG needs a positive time")
    if at > log.elapsed + 1e-12:
        raise ValueError(f"run ended at {log.elapsed}, cannot evaluate TACG at {at}")
    k = bisect.bisect_right(log.arrival_times, at)
    return (log.saved_cumulative[k - 1] if k else 0.0) / at


def mean_ecg(log: MetricsLog, start: float | None = None, end: float | None = None) -> float:
    """Average ECG sample over ``[start, end]``; defaults to the last four fifths."""
    start = log.elapsed / 5 if start is None else start
    end = log.elapsed if end is None else end
    t = np.asarray(log.ecg_times)
    sel = (t >= start) & (t <= end)
    if not sel.any():
        return float("nan")
    return float(np.asarray(log.ecg)[sel].mean())


class Policy:
    """Engine hooks. ``X`` is the shared 0/1 allocation, sources included."""

    name = "static"
    period: float | None = None

    def start(self, dem: Demand, X: np.ndarray, rng: np.random.Generator) -> None:
        self.dem, self.X, self.rng = dem, X, rng

    def on_arrival(self, r: int, now: float) -> None:
        pass

    def on_hit(self, r: int, hit: int, now: float) -> None:
        pass

    def on_period(self, now: float) -> float:
        """Handle a period boundary; returns the cost of refilling caches."""
        return 0.0


class StaticPolicy(Policy):
    """Fixed allocation; useful as a reference."""

    def __init__(self, X):
        self.allocation = np.asarray(X, dtype=float)

    def start(self, dem, X, rng):
        super().start(dem, X, rng)
        X[...] = check_allocation(dem, self.allocation)


class PathReplication(Policy):
    """Every node on the reverse path caches the item, evicting by ``kind``."""

    def __init__(self, kind: str = "LRU", persistent_counts: bool = False):
        if kind not in POLICIES:
            raise ValueError(f"unknown eviction policy {kind!r}")
        self.name = kind
        self.kind = kind
        self.persistent_counts = persistent_counts

    def start(self, dem, X, rng):
        super().start(dem, X, rng)
        self.caches = []
        for v in range(dem.node_count):
            pinned = np.flatnonzero(dem.sources[v])
            initial = [i for i in np.flatnonzero(X[v]) if not dem.sources[v, i]]
            self.caches.append(
                ClassicCache(self.kind, int(dem.free_slots[v]), pinned, rng, self.persistent_counts, initial)
            )

    def on_hit(self, r, hit, now):
        req = self.dem.requests[r]
        path, item = req.path, req.item
        self.caches[path[hit]].on_request_hit_update(item)
        for k in range(hit - 1, -1, -1):
            v = path[k]
            evicted = self.caches[v].on_response(item)
            if self.caches[v].slots:
                self.X[v, item] = 1.0
            if evicted is not None:
                self.X[v, evicted] = 0.0


class GreedyReplication(Policy):
    """Greedy path replication driven by decaying weight counters."""

    name = "GRD"

    def __init__(self, beta: float = 0.1):
        self.beta = beta

    def start(self, dem, X, rng):
        super().start(dem, X, rng)
        self.nodes = []
        for v in range(dem.node_count):
            initial = [i for i in np.flatnonzero(X[v]) if not dem.sources[v, i]]
            self.nodes.append(
                GrdNode(dem.item_count, int(dem.free_slots[v]), np.flatnonzero(dem.sources[v]), self.beta, initial)
            )

    def on_hit(self, r, hit, now):
        req = self.dem.requests[r]
        for v, t in grd_weight_counter(self.dem.topology, req.path, hit):
            change = self.nodes[v].on_response(req.item, t, now)
            if change is not None:
                inserted, evicted = change
                self.X[v, inserted] = 1.0
                self.X[v, evicted] = 0.0


class GradientAscent(Policy):
    """Projected gradient ascent with periods of length ``period``.

    ``step`` is ``"sqrt"`` for ``gamma0 / sqrt(k)`` or ``"theory"`` for the
    schedule of :func:`cachenet.relaxation.theoretical_bounds`. With
    ``charge_refill`` every item fetched at a boundary is charged the
    cheapest transfer from a node that held it before the reshuffle.
    """

    def __init__(
        self,
        period: float = 10.0,
        gamma0: float = 1.0,
        step: str = "sqrt",
        smoothing: bool = True,
        charge_refill: bool = False,
        record: bool = False,
    ):
        if period <= 0:
            raise ValueError("period must be positive")
        if step not in ("sqrt", "theory"):
            raise ValueError(f"unknown step schedule {step!r}")
        self.period = float(period)
        self.name = f"PGA{period:g}"
        self.gamma0 = gamma0
        self.step = step
        self.smoothing = smoothing
        self.charge_refill = charge_refill
        self.record = record
        self.trace: list[tuple[int, np.ndarray, np.ndarray, np.ndarray]] = []

    def start(self, dem, X, rng):
        super().start(dem, X, rng)
        if self.step == "sqrt":
            self.gamma = inverse_sqrt(self.gamma0)
        else:
            self.gamma = theoretical_bounds(dem, self.period).step
        self.state = PgaState(dem, self.period, Y0=X, smoothing=self.smoothing)
        self.ybar = self.state.smoothed(self.gamma(1))
        X[...] = self.state.resample(self.ybar, rng)
        self._dist = None
        if self.charge_refill:
            from scipy.sparse import csr_matrix
            from scipy.sparse.csgraph import dijkstra

            n = dem.node_count
            keys = list(dem.topology.edges)
            rows = [u for u, _ in keys]
            cols = [v for _, v in keys]
            vals = [dem.topology.edges[e] for e in keys]
            self._dist = dijkstra(csr_matrix((vals, (rows, cols)), shape=(n, n)))

    def on_arrival(self, r, now):
        req = self.dem.requests[r]
        self.state.control(req.item, req.path)

    def on_period(self, now):
        k = self.state.k
        y_used = self.state.y
        z = self.state.end_period(self.gamma(k))
        if self.record:
            self.trace.append((k, y_used, self.ybar, z))
        self.ybar = self.state.smoothed(self.gamma(self.state.k))
        old = self.X.copy()
        self.X[...] = self.state.resample(self.ybar, self.rng)
        if self._dist is None:
            return 0.0
        cost = 0.0
        for v, i in zip(*np.nonzero((self.X > 0) & (old == 0))):
            holders = np.flatnonzero(old[:, i])
            cost += float(self._dist[holders, v].min())
        return cost


def make_policy(name: str, beta: float = 0.1, gamma0: float = 1.0, **options) -> Policy:
    """Policy from its name: ``LRU``, ``LFU``, ``FIFO``, ``RR``, ``GRD`` or ``PGA<T>``."""
    if name in POLICIES:
        return PathReplication(name, persistent_counts=options.get("persistent_counts", False))
    if name == "GRD":
        return GreedyReplication(beta)
    m = _PGA.match(name)
    if m and float(m.group(1)) > 0:
        kw = {k: options[k] for k in ("step", "smoothing", "charge_refill", "record") if k in options}
        return GradientAscent(float(m.group(1)), gamma0=gamma0, **kw)
    raise ValueError(f"unknown policy {name!r}; valid names are {', '.join(POLICY_NAMES)}")


def _exponentials(rng: np.random.Generator, rate: float):
    while True:
        yield from rng.exponential(1.0 / rate, size=_BLOCK).tolist()


def run(
    dem: Demand,
    policy: Policy | str,
    horizon: float,
    seed: int = 0,
    measurement_rate: float = 1.0,
    X0=None,
) -> MetricsLog:
    """Simulate ``policy`` on ``dem`` over ``[0, horizon]``.

    Every policy starts from ``X0`` (default: sources plus the
    lowest-numbered other items). Identical arguments give identical logs.
    """
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    if not measurement_rate > 0:
        raise ValueError("measurement rate must be positive")
    if isinstance(policy, str):
        policy = make_policy(policy)
    log = MetricsLog()
    c = dem.compiled
    total_rate = float(c.rates.sum())
    if total_rate <= 0:
        log.elapsed = float(horizon)
        return log

    arrival_ss, choice_ss, measure_ss, policy_ss = np.random.SeedSequence(seed).spawn(4)
    choice_rng = np.random.default_rng(choice_ss)
    X = lexicographic_fill(dem) if X0 is None else check_allocation(dem, X0).copy()
    policy.start(dem, X, np.random.default_rng(policy_ss))

    paths = [r.path for r in dem.requests]
    items = [r.item for r in dem.requests]
    # saved[r][k]: cost avoided when request r is served at position k
    saved = []
    for r in range(len(paths)):
        w = c.weights[r, : c.lengths[r]]
        saved.append(np.concatenate([np.cumsum(w[::-1])[::-1], [0.0]]).tolist())
    cdf = np.cumsum(c.rates / total_rate)
    cdf[-1] = 1.0

    def choices():
        while True:
            yield from np.searchsorted(cdf, choice_rng.random(_BLOCK), side="right").tolist()

    gaps = _exponentials(np.random.default_rng(arrival_ss), total_rate)
    mgaps = _exponentials(np.random.default_rng(measure_ss), measurement_rate)
    picks = choices()

    seq = 0
    queue: list[tuple[float, int, int]] = []

    def push(t, kind):
        nonlocal seq
        heapq.heappush(queue, (t, kind, seq))
        seq += 1

    push(next(gaps), ARRIVAL)
    push(next(mgaps), MEASUREMENT)
    if policy.period is not None:
        push(policy.period, PERIOD)

    saved_total = 0.0
    while queue and queue[0][0] <= horizon:
        now, kind, _ = heapq.heappop(queue)
        if kind == ARRIVAL:
            r = next(picks)
            policy.on_arrival(r, now)
            path, item = paths[r], items[r]
            hit = 0
            while X[path[hit], item] == 0.0:
                hit += 1
            saved_total += saved[r][hit]
            log.served_count += 1
            log.arrival_times.append(now)
            log.saved_cumulative.append(saved_total)
            policy.on_hit(r, hit, now)
            push(now + next(gaps), ARRIVAL)
        elif kind == MEASUREMENT:
            log.ecg_times.append(now)
            log.ecg.append(float(multilinear_gain(dem, X)))
            log.tacg_samples.append((saved_total - log.refill_cost) / now)
            push(now + next(mgaps), MEASUREMENT)
        else:
            log.refill_cost += policy.on_period(now)
            push(now + policy.period, PERIOD)
    log.saved_cost_accum = saved_total
    log.elapsed = float(horizon)
    return log


def _fmt(x: float) -> str:
    return repr(float(x))


def write_metrics_csv(log: MetricsLog, path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["time", "ecg", "tacg"])
        for row in zip(log.ecg_times, log.ecg, log.tacg_samples):
            out.writerow([_fmt(x) for x in row])


def write_pga_dump(policy: GradientAscent, path) -> None:
    """Per-period state of every node: ``node, period, item, y, ybar, z``."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["node", "period", "item", "y", "ybar", "z"])
        for k, y, ybar, z in policy.trace:
            for v in range(y.shape[0]):
                for i in range(y.shape[1]):
                    out.writerow([v, k, i, _fmt(y[v, i]), _fmt(ybar[v, i]), _fmt(z[v, i])])
