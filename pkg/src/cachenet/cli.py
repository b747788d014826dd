"""Command-line experiment runner.

Subcommands
-----------
run <config>
    Simulate every (seed, policy) pair of a JSON experiment config and write
    trajectories, the relaxation optimum, a summary table and figures.
star
    Simulate one policy on the four-node star.
solve <config>
    Offline only: optimum of the relaxation, its pipage rounding and greedy.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .demand import generate_demand
from .objective import caching_gain
from .relaxation import greedy_offline, maximize_L, pipage_round
from .scenarios import RECIPES, Recipe, build_instance, star
from .sim import make_policy, mean_ecg, run, write_metrics_csv, write_pga_dump
from .topology import TOPOLOGY_KINDS, assign_weights, load

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "run_experiment", "solve", "main"]

SUMMARY_COLUMNS = ["topology", "policy", "seed", "mean_ecg", "f_ystar", "ratio", "wallclock_s"]


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``topology`` is an evaluation recipe name, a generator kind, ``"star"``
    or ``"file"`` (with ``topology_file``). Unset workload fields fall back
    to the recipe, or to the small-instance defaults for bare generators.
    """

    topology: str
    policies: list[str]
    seeds: list[int] = field(default_factory=lambda: [0])
    horizon: float = 5000.0
    out: str = "results"
    item_count: int | None = None
    request_count: int | None = None
    query_count: int | None = None
    cache_slots: int | None = None
    zipf: float | None = None
    weight_low: float | None = None
    weight_high: float | None = None
    topology_params: dict = field(default_factory=dict)
    topology_file: str | None = None
    M: float = 100.0
    alpha: float = 0.1
    beta: float = 0.1
    gamma0: float = 1.0
    pga_step: str = "sqrt"
    smoothing: bool = True
    charge_refill: bool = False
    persistent_lfu: bool = False
    measurement_rate: float = 1.0
    solver: str = "ascent"
    iterations: int = 2000
    workers: int = 1
    figures: bool = True
    pga_dump: bool = False
    wallclock: bool = False

    def recipe(self) -> Recipe:
        if self.topology in RECIPES:
            base = RECIPES[self.topology]
        else:
            base = Recipe(self.topology, self.topology)
        changes = {
            k: getattr(self, k)
            for k in ("item_count", "request_count", "query_count", "cache_slots", "zipf", "weight_low", "weight_high")
            if getattr(self, k) is not None
        }
        if self.topology_params:
            changes["params"] = {**base.params, **self.topology_params}
        return base.scaled(horizon=self.horizon, **changes)

    def instance(self, seed: int):
        if self.topology == "star":
            return star(self.M, self.alpha)
        recipe = self.recipe()
        if self.topology == "file":
            topo = assign_weights(load(self.topology_file), recipe.weight_low, recipe.weight_high, seed=seed + 1)
            return generate_demand(
                topo,
                recipe.item_count,
                min(recipe.query_count, topo.node_count),
                recipe.request_count,
                zipf_s=recipe.zipf,
                seed=seed + 2,
                cache_slots=recipe.cache_slots,
            )
        return build_instance(recipe, seed)


_TYPES = {
    "horizon": float, "item_count": int, "request_count": int, "query_count": int,
    "cache_slots": int, "zipf": float, "weight_low": float, "weight_high": float,
    "M": float, "alpha": float, "beta": float, "gamma0": float, "measurement_rate": float,
    "iterations": int, "workers": int, "smoothing": bool, "charge_refill": bool,
    "persistent_lfu": bool, "figures": bool, "pga_dump": bool, "wallclock": bool,
    "out": str, "solver": str, "pga_step": str, "topology": str, "topology_file": str,
}
_POSITIVE = {"horizon", "item_count", "request_count", "query_count", "M", "measurement_rate", "iterations", "workers"}
_NONNEGATIVE = {"cache_slots", "zipf", "beta", "gamma0", "weight_low"}


def _check_type(key, value, kind):
    if kind is bool:
        ok = isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigError(f"config.{key}: expected {kind.__name__}, got {type(value).__name__}")
    return float(value) if kind is float else value


def validate_config(raw: dict) -> ExperimentConfig:
    """Check a decoded JSON document and fill in defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"config.{unknown[0]}: unknown key")
    for key in ("topology", "policies"):
        if key not in raw:
            raise ConfigError(f"config.{key}: required")
    values = {}
    for key, value in raw.items():
        if key in _TYPES:
            value = _check_type(key, value, _TYPES[key])
        values[key] = value

    topo = values["topology"]
    valid = sorted(set(RECIPES) | set(TOPOLOGY_KINDS) | {"star", "file"})
    if topo not in valid:
        raise ConfigError(f"config.topology: unknown {topo!r}; expected one of {', '.join(valid)}")
    if topo == "file" and "topology_file" not in values:
        raise ConfigError("config.topology_file: required when topology is 'file'")

    policies = values["policies"]
    if not isinstance(policies, list) or not policies:
        raise ConfigError("config.policies: expected a nonempty list")
    for j, name in enumerate(policies):
        try:
            make_policy(name)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"config.policies[{j}]: {exc}") from None

    seeds = values.get("seeds", [0])
    if not isinstance(seeds, list) or not seeds:
        raise ConfigError("config.seeds: expected a nonempty list")
    for j, s in enumerate(seeds):
        if not isinstance(s, int) or isinstance(s, bool) or s < 0:
            raise ConfigError(f"config.seeds[{j}]: expected a nonnegative integer")

    for key in _POSITIVE:
        if key in values and not values[key] > 0:
            raise ConfigError(f"config.{key}: must be positive")
    for key in _NONNEGATIVE:
        if key in values and values[key] < 0:
            raise ConfigError(f"config.{key}: must be nonnegative")
    if "alpha" in values and not 0 < values["alpha"] < 1:
        raise ConfigError("config.alpha: must lie in (0, 1)")
    if "M" in values and not values["M"] > 1:
        raise ConfigError("config.M: must exceed 1")
    if values.get("solver", "ascent") not in ("ascent", "lp"):
        raise ConfigError("config.solver: expected 'ascent' or 'lp'")
    if values.get("pga_step", "sqrt") not in ("sqrt", "theory"):
        raise ConfigError("config.pga_step: expected 'sqrt' or 'theory'")
    if not isinstance(values.get("topology_params", {}), dict):
        raise ConfigError("config.topology_params: expected an object")
    return ExperimentConfig(**values)


def parse_config(path) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    return validate_config(raw)


def _policy(cfg: ExperimentConfig, name: str):
    return make_policy(
        name,
        beta=cfg.beta,
        gamma0=cfg.gamma0,
        persistent_counts=cfg.persistent_lfu,
        step=cfg.pga_step,
        smoothing=cfg.smoothing,
        charge_refill=cfg.charge_refill,
        record=cfg.pga_dump,
    )


def _cell(cfg: ExperimentConfig, seed: int, name: str, out: Path):
    """Simulate one (seed, policy) pair and write its trajectory."""
    dem = cfg.instance(seed)
    policy = _policy(cfg, name)
    start = time.perf_counter()
    log = run(dem, policy, cfg.horizon, seed=seed, measurement_rate=cfg.measurement_rate)
    elapsed = time.perf_counter() - start
    stem = f"{cfg.topology}_{name}_seed{seed}"
    write_metrics_csv(log, out / "trajectories" / f"{stem}.csv")
    if cfg.pga_dump and name.startswith("PGA"):
        write_pga_dump(policy, out / "pga" / f"{stem}.csv")
    return seed, name, log, elapsed


def _optimum(cfg: ExperimentConfig, dem):
    Y, _ = maximize_L(dem, iterations=cfg.iterations, method=cfg.solver)
    return Y, float(caching_gain(dem, Y))


def _write_matrix(Y: np.ndarray, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["node", "item", "y"])
        for v, i in zip(*np.nonzero(Y > 0)):
            out.writerow([v, i, repr(float(Y[v, i]))])


def run_experiment(cfg: ExperimentConfig, echo=None) -> list[dict]:
    """Run the whole grid; returns the summary rows in output order."""
    out = Path(cfg.out)
    for sub in ("trajectories", "optimum", "pga", "figures"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    optimum = {}
    for seed in cfg.seeds:
        Y, f = _optimum(cfg, cfg.instance(seed))
        optimum[seed] = f
        _write_matrix(Y, out / "optimum" / f"{cfg.topology}_seed{seed}.csv")

    jobs = [(seed, name) for seed in cfg.seeds for name in cfg.policies]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_cell, *zip(*[(cfg, s, n, out) for s, n in jobs])))
    else:
        results = [_cell(cfg, s, n, out) for s, n in jobs]

    rows, logs = [], {}
    for seed, name, log, elapsed in results:
        logs[seed, name] = log
        ecg = mean_ecg(log)
        f = optimum[seed]
        rows.append({
            "topology": cfg.topology,
            "policy": name,
            "seed": seed,
            "mean_ecg": ecg,
            "f_ystar": f,
            "ratio": ecg / f if f > 0 else float("nan"),
            "wallclock_s": round(elapsed, 3) if cfg.wallclock else "",
        })
        if echo:
            echo(f"{cfg.topology} {name} seed={seed} mean_ecg={ecg:.4f} ratio={rows[-1]['ratio']:.4f}")
    write_summary(rows, out / "summary.csv")
    if cfg.figures:
        from .report import plot_ratios, plot_trajectories

        for seed in cfg.seeds:
            runs = {name: logs[seed, name] for name in cfg.policies}
            plot_trajectories(runs, optimum[seed], out / "figures" / f"{cfg.topology}_seed{seed}.png",
                              title=f"{cfg.topology}, seed {seed}")
        plot_ratios(rows, out / "figures" / f"{cfg.topology}_ratios.png")
    return rows


def write_summary(rows: list[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.DictWriter(fh, SUMMARY_COLUMNS)
        out.writeheader()
        for row in rows:
            out.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def solve(cfg: ExperimentConfig, seed: int) -> dict:
    dem = cfg.instance(seed)
    Y, L = maximize_L(dem, iterations=cfg.iterations, method=cfg.solver)
    return {
        "L_ystar": L,
        "f_ystar": float(caching_gain(dem, Y)),
        "f_pipage": float(caching_gain(dem, pipage_round(dem, Y))),
        "f_greedy": float(caching_gain(dem, greedy_offline(dem))),
    }


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cachenet", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, help="run this single seed instead of the configured ones")
        p.add_argument("--out", help="output directory")

    p = sub.add_parser("run", help="simulate an experiment grid")
    p.add_argument("config")
    p.add_argument("--wallclock", action="store_true", help="record run times in the summary")
    common(p)

    p = sub.add_parser("star", help="simulate one policy on the star network")
    p.add_argument("--M", type=float, default=100.0)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--policy", default="LRU")
    p.add_argument("--horizon", type=float, default=5000.0)
    p.add_argument("--no-figures", action="store_true")
    common(p)

    p = sub.add_parser("solve", help="offline optimisation only")
    p.add_argument("config")
    common(p)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be nonnegative")
        cfg.seeds = [args.seed]
    if args.out is not None:
        cfg.out = args.out
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "star":
            cfg = validate_config({
                "topology": "star", "M": args.M, "alpha": args.alpha, "policies": [args.policy],
                "horizon": args.horizon, "figures": not args.no_figures, "out": "results",
            })
        else:
            cfg = parse_config(args.config)
        cfg = _apply_overrides(cfg, args)
        if args.command == "solve":
            writer = csv.writer(sys.stdout)
            writer.writerow(["topology", "seed", "L_ystar", "f_ystar", "f_pipage", "f_greedy"])
            for seed in cfg.seeds:
                res = solve(cfg, seed)
                writer.writerow([cfg.topology, seed, *(repr(res[k]) for k in ("L_ystar", "f_ystar", "f_pipage", "f_greedy"))])
            return 0
        if args.command == "run" and args.wallclock:
            cfg.wallclock = True
        rows = run_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: cannot write output: {exc}", file=sys.stderr)
        return 1
    writer = csv.DictWriter(sys.stdout, SUMMARY_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return 0


if __name__ == "__main__":
    sys.exit(main())
