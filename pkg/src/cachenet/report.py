"""Figures written next to the CSV outputs of an experiment."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_trajectories", "plot_ratios"]

_METADATA = {"Software": None}


def plot_trajectories(runs: dict, f_ystar: float, path, title: str = "") -> Path:
    """ECG and TACG against time for several policies on one instance.

    ``runs`` maps a policy name to its :class:`~cachenet.sim.MetricsLog`.
    The optimum of the relaxation is drawn as a dashed line.
    """
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.8), sharey=True)
    for name, log in runs.items():
        axes[0].plot(log.ecg_times, log.ecg, lw=0.6, label=name)
        axes[1].plot(log.ecg_times, log.tacg_samples, lw=1.0, label=name)
    for ax, label in zip(axes, ("ECG", "TACG")):
        ax.axhline(f_ystar, color="k", ls="--", lw=1.0, label="F(Y*)")
        ax.set_xlabel("time")
        ax.set_ylabel(label)
        ax.grid(alpha=0.3)
    axes[1].legend(fontsize=7, loc="lower right")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_METADATA)
    plt.close(fig)
    return path


def plot_ratios(rows: list[dict], path) -> Path:
    """Grouped bars of mean ``ratio`` per topology and policy, averaged over seeds."""
    cells = defaultdict(list)
    topologies, policies = [], []
    for row in rows:
        t, p = row["topology"], row["policy"]
        if t not in topologies:
            topologies.append(t)
        if p not in policies:
            policies.append(p)
        cells[t, p].append(float(row["ratio"]))
    x = np.arange(len(topologies))
    width = 0.8 / max(1, len(policies))
    fig, ax = plt.subplots(figsize=(max(5, 1.2 * len(topologies) * max(1, len(policies)) / 3), 3.8))
    for j, p in enumerate(policies):
        heights = [np.mean(cells[t, p]) if cells[t, p] else np.nan for t in topologies]
        ax.bar(x + (j - (len(policies) - 1) / 2) * width, heights, width, label=p)
    ax.axhline(1.0, color="k", ls="--", lw=1.0)
    ax.set_xticks(x, topologies, rotation=30, ha="right")
    ax.set_ylabel("ECG / F(Y*)")
    ax.legend(fontsize=7, ncol=min(4, len(policies)))
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_METADATA)
    plt.close(fig)
    return path
