"""Offline optimisation: capped-simplex projection, maximisation of the
concave relaxation, pipage rounding and the greedy baseline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .demand import Demand
from .objective import (
    FeasibilityError,
    check_marginals,
    concave_gain,
    multilinear_gain,
    sources_only,
    subgradient_box,
    uniform_marginals,
)

__all__ = [
    "TheoreticalBounds",
    "theoretical_bounds",
    "inverse_sqrt",
    "project_node",
    "project_marginals",
    "maximize_L",
    "maximize_L_lp",
    "pipage_round",
    "greedy_offline",
]

FRACTIONAL_TOL = 1e-7
BISECTION_TOL = 1e-10


@dataclass(frozen=True)
class TheoreticalBounds:
    """Constants of the convergence guarantee for stochastic projected ascent.

    W is the largest edge weight, ``max_rate`` the largest aggregate request
    rate through any (node, item) pair, ``diameter`` the diameter of the
    relaxed domain and ``gradient_bound`` the bound on the estimator's root
    mean square norm for measurement periods of length ``period``.
    """

    W: float
    max_rate: float
    diameter: float
    gradient_bound: float
    period: float

    def step(self, k: int) -> float:
        """Step size ``D / (M sqrt(k))``."""
        if self.gradient_bound == 0:
            return 0.0
        return self.diameter / (self.gradient_bound * math.sqrt(k))

    def gap_bound(self, steps) -> float:
        """Bound on the expected suboptimality after a window of steps."""
        steps = np.asarray(steps, dtype=float)
        return float((self.diameter**2 + self.gradient_bound**2 * (steps**2).sum()) / steps.sum())


def theoretical_bounds(dem: Demand, period: float = 1.0) -> TheoreticalBounds:
    n, items = dem.node_count, dem.item_count
    W = max(dem.topology.edges.values(), default=0.0)
    through = np.zeros((n, items))
    for r in dem.requests:
        for v in r.path:
            through[v, r.item] += r.rate
    lam = float(through.max()) if through.size else 0.0
    diameter = math.sqrt(2 * n * int(dem.capacities.max()))
    if lam > 0:
        grad = W * n * lam * math.sqrt(n * items * (1 + 1 / (lam * period)))
    else:
        grad = 0.0
    return TheoreticalBounds(W, lam, diameter, grad, period)


def inverse_sqrt(gamma0: float = 1.0) -> Callable[[int], float]:
    """Step schedule ``gamma0 / sqrt(k)`` for ``k >= 1``."""
    return lambda k: gamma0 / math.sqrt(k)


def _project_rows(Z: np.ndarray, fixed: np.ndarray, budget: np.ndarray) -> np.ndarray:
    """Row-wise capped-simplex projection, solving for every shift at once."""
    free = ~fixed
    nfree = free.sum(axis=1)
    out = np.where(fixed, 1.0, 0.0)
    # Rows whose free budget is 0 or the whole free set have a single point.
    full = budget >= nfree
    out[full] = np.where(free[full], 1.0, out[full])
    active = (budget > 0) & ~full
    if not active.any():
        return out
    Z, free, budget = Z[active], free[active], budget[active]
    Zf = np.where(free, Z, -np.inf)
    lo = np.where(free, Z, np.inf).min(axis=1) - 1.0
    hi = Zf.max(axis=1)

    # mass(theta) is nonincreasing and piecewise linear: the free count at
    # lo, 0 at hi. Newton steps land exactly once inside the right piece;
    # bisection keeps them bracketed.
    theta = 0.5 * (lo + hi)
    for _ in range(200):
        X = np.where(free, np.clip(Z - theta[:, None], 0.0, 1.0), 0.0)
        s = X.sum(axis=1)
        err = s - budget
        if (np.abs(err) <= BISECTION_TOL).all():
            break
        lo = np.where(err > 0, theta, lo)
        hi = np.where(err < 0, theta, hi)
        slope = (free & (Z - theta[:, None] > 0) & (Z - theta[:, None] < 1)).sum(axis=1)
        newton = theta + err / np.maximum(slope, 1)
        ok = (slope > 0) & (newton > lo) & (newton < hi)
        theta = np.where(np.abs(err) <= BISECTION_TOL, theta, np.where(ok, newton, 0.5 * (lo + hi)))
    X = np.where(free, np.clip(Z - theta[:, None], 0.0, 1.0), 0.0)
    # Spread the leftover rounding error over the interior coordinates.
    interior = free & (X > 0) & (X < 1)
    count = interior.sum(axis=1)
    resid = np.where(count > 0, (budget - X.sum(axis=1)) / np.maximum(count, 1), 0.0)
    X = np.where(interior, np.clip(X + resid[:, None], 0.0, 1.0), X)
    out[active] = np.where(free, X, out[active])
    return out


def project_node(y, capacity: int, fixed_ones=()) -> np.ndarray:
    """Euclidean projection onto ``{y in [0,1]^n : sum y = capacity}`` with
    the ``fixed_ones`` coordinates pinned to 1.

    The free coordinates become ``clip(y - theta, 0, 1)``; the shift
    ``theta`` is found by safeguarded Newton steps.
    """
    y = np.asarray(y, dtype=float)
    fixed = np.zeros(y.size, dtype=bool)
    fixed[list(fixed_ones)] = True
    budget = capacity - int(fixed.sum())
    if budget < 0 or budget > int((~fixed).sum()):
        raise FeasibilityError(f"capacity {capacity} incompatible with {int(fixed.sum())} pinned items out of {y.size}")
    return _project_rows(y[None, :], fixed[None, :], np.array([float(budget)]))[0]


def project_marginals(dem: Demand, Y) -> np.ndarray:
    """Project every row of ``Y`` onto its node's relaxed constraint set."""
    Y = np.asarray(Y, dtype=float)
    budget = dem.free_slots.astype(float)
    if (budget < 0).any() or (budget > (~dem.sources).sum(axis=1)).any():
        raise FeasibilityError("capacities incompatible with source placements")
    return _project_rows(Y, dem.sources, budget)


def maximize_L(
    dem: Demand,
    iterations: int = 2000,
    step_rule: Callable[[int], float] | None = None,
    start=None,
    method: str = "ascent",
) -> tuple[np.ndarray, float]:
    """Maximise the concave relaxation over the relaxed domain.

    With ``method="ascent"`` (default) this runs projected supergradient
    ascent along the upper end of the supergradient box and returns the
    step-weighted average of iterates ``iterations // 2 .. iterations``.
    Without an explicit ``step_rule`` the step is ``D / (G sqrt(k))`` with
    ``D`` the diameter of the domain and ``G`` the norm of the supergradient
    at the starting point, which makes the schedule independent of the scale
    of weights and rates. ``method="lp"`` solves the equivalent linear
    program exactly instead.
    """
    if method == "lp":
        return maximize_L_lp(dem)
    if method != "ascent":
        raise ValueError(f"unknown method {method!r}")
    if iterations < 1:
        raise ValueError("iterations must be positive")
    Y = uniform_marginals(dem) if start is None else check_marginals(dem, start).copy()
    if step_rule is None:
        norm = float(np.linalg.norm(subgradient_box(dem, Y).upper))
        diameter = math.sqrt(2.0 * float(dem.free_slots.sum()))
        step_rule = inverse_sqrt(diameter / norm if norm > 0 else 1.0)
    first = max(1, iterations // 2)
    acc = np.zeros_like(Y)
    weight = 0.0
    for k in range(1, iterations + 1):
        gamma = step_rule(k)
        if k >= first:
            acc += gamma * Y
            weight += gamma
        if k == iterations:
            break
        z = subgradient_box(dem, Y).upper
        Y = project_marginals(dem, Y + gamma * z)
    Y_avg = acc / weight if weight > 0 else Y
    return Y_avg, float(concave_gain(dem, Y_avg))


def _fractional(row: np.ndarray) -> np.ndarray:
    return np.flatnonzero(np.abs(row - np.round(row)) > FRACTIONAL_TOL)


def pipage_round(dem: Demand, Y, trace: list | None = None) -> np.ndarray:
    """Round marginals to a feasible allocation without decreasing the gain.

    Each step takes the lowest node with two fractional entries, moves mass
    between its two lowest fractional items until one of them hits 0 or 1
    (both directions are tried, the better one is kept) and repeats.
    """
    Y = check_marginals(dem, Y).copy()
    current = float(multilinear_gain(dem, Y))
    if trace is not None:
        trace.append(current)
    steps = 0
    limit = dem.node_count * dem.item_count
    for v in range(dem.node_count):
        while True:
            frac = _fractional(Y[v])
            if frac.size < 2:
                break
            i, j = int(frac[0]), int(frac[1])
            up = min(1.0 - Y[v, i], Y[v, j])
            down = min(Y[v, i], 1.0 - Y[v, j])
            cand_up, cand_down = Y.copy(), Y.copy()
            cand_up[v, i] += up
            cand_up[v, j] -= up
            cand_down[v, i] -= down
            cand_down[v, j] += down
            f_up, f_down = multilinear_gain(dem, np.stack([cand_up, cand_down]))
            Y, new = (cand_up, f_up) if f_up >= f_down else (cand_down, f_down)
            assert new >= current - 1e-9 * max(1.0, abs(current)), "pipage step decreased the gain"
            current = float(new)
            steps += 1
            assert steps <= limit
            if trace is not None:
                trace.append(current)
    X = np.round(Y)
    if np.abs(X - Y).max() > FRACTIONAL_TOL:
        raise FeasibilityError("rounding left fractional entries; capacities must be integral")
    return X


def greedy_offline(dem: Demand) -> np.ndarray:
    """Fill caches one placement at a time, always taking the largest marginal gain.

    The marginal gain of adding item ``i`` at ``v`` is the lower end of the
    supergradient box at the current 0/1 allocation. Ties go to the smallest
    ``(v, i)``.
    """
    X = sources_only(dem)
    room = dem.free_slots.copy()
    for _ in range(int(room.sum())):
        gain = subgradient_box(dem, X).lower
        gain[X > 0] = -np.inf
        gain[room <= 0] = -np.inf
        v, i = np.unravel_index(int(np.argmax(gain)), gain.shape)
        X[v, i] = 1.0
        room[v] -= 1
    return X


def maximize_L_lp(dem: Demand) -> tuple[np.ndarray, float]:
    """Exact maximiser of the concave relaxation via its linear-program form.

    One auxiliary variable ``t <= min(1, partial coverage)`` per (request,
    edge) term; solved with HiGHS.
    """
    from scipy.optimize import linprog
    from scipy.sparse import coo_matrix

    c = dem.compiled
    n, items = dem.node_count, dem.item_count
    ny = n * items
    rows, cols = np.nonzero(c.mask)
    nt = rows.size
    cost = np.concatenate([np.zeros(ny), -c.rated_weights[rows, cols]])

    # t_{r,k} - sum_{k' <= k} y_{p_k', i} <= 0
    a_rows, a_cols, a_vals = [], [], []
    for t_idx, (r, k) in enumerate(zip(rows, cols)):
        a_rows.append(t_idx)
        a_cols.append(ny + t_idx)
        a_vals.append(1.0)
        item = c.items[r]
        for kk in range(k + 1):
            a_rows.append(t_idx)
            a_cols.append(c.nodes[r, kk] * items + item)
            a_vals.append(-1.0)
    A_ub = coo_matrix((a_vals, (a_rows, a_cols)), shape=(nt, ny + nt)).tocsr()
    b_ub = np.zeros(nt)

    eq_rows = np.repeat(np.arange(n), items)
    A_eq = coo_matrix((np.ones(ny), (eq_rows, np.arange(ny))), shape=(n, ny + nt)).tocsr()
    b_eq = dem.capacities.astype(float)

    lower = np.zeros(ny + nt)
    lower[:ny][dem.sources.ravel()] = 1.0
    bounds = np.column_stack([lower, np.ones(ny + nt)])
    res = linprog(cost, A_ub=A_ub if nt else None, b_ub=b_ub if nt else None,
                  A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    Y = project_marginals(dem, res.x[:ny].reshape(n, items))
    return Y, float(concave_gain(dem, Y))
