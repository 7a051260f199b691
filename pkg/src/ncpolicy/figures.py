"""Figure rendering for training and analysis artifacts.

Everything draws onto the Agg backend and saves straight to file; no
interactive windows.  These are the graphical companions of the CSV
outputs: learning curves for training records, slope-angle histogram
grids and time-constant range charts for contribution reports, and
trajectory projections of neuron activity.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import ContributionReport, activity_projection
from .trace import RolloutTrace
from .training import TrainRecord


def save_learning_curve(record: TrainRecord, path: str | Path) -> Path:
    """Filtered-return estimate and noise scale over the iterations."""
    fig, ax = plt.subplots(figsize=(7.5, 4.0))
    ax.plot(record.iterations, -record.estimates, lw=1.0, color="tab:blue",
            label="return estimate")
    ax.set_xlabel("iteration")
    ax.set_ylabel("filtered return estimate")
    ax.grid(alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(record.iterations, record.sigmas, lw=0.8, color="tab:orange",
             alpha=0.7, label="noise scale")
    ax2.set_ylabel("noise scale")
    ax2.set_yscale("log")
    fig.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_slope_histograms(report: ContributionReport, target: str,
                          path: str | Path) -> Path:
    """Grid of slope-angle histograms, one panel per source neuron."""
    pairs = [p for p in report.pairs if p.target == target]
    if not pairs:
        raise ValueError(f"report has no pairs with target {target!r}")
    cols = 3
    rows = math.ceil(len(pairs) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(3.2 * cols, 2.4 * rows),
                             sharex=True)
    axes = np.atleast_1d(axes).ravel()
    verdict_color = {"positive": "tab:green", "negative": "tab:red",
                     "phase_switching": "tab:purple"}
    for ax, p in zip(axes, pairs):
        centers = 0.5 * (p.bin_edges[:-1] + p.bin_edges[1:])
        width = p.bin_edges[1] - p.bin_edges[0]
        ax.bar(centers, p.counts, width=width * 0.9,
               color=verdict_color[p.verdict.value])
        ax.set_title(f"{p.source} → {p.target}  [{p.verdict.value}]",
                     fontsize=9)
        ax.axvline(0.0, color="k", lw=0.6, alpha=0.5)
        ax.set_xlim(-math.pi / 2, math.pi / 2)
    for ax in axes[len(pairs):]:
        ax.set_visible(False)
    fig.supxlabel("slope angle (rad)")
    fig.supylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_tau_ranges(ranges: dict[str, tuple[float, float]],
                    path: str | Path) -> Path:
    """Horizontal range bars of each neuron's time-constant span."""
    names = list(ranges)
    lows = np.array([ranges[n][0] for n in names])
    highs = np.array([ranges[n][1] for n in names])
    y = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7.0, 0.45 * len(names) + 1.2))
    ax.hlines(y, lows, highs, color="tab:blue", lw=5, alpha=0.7)
    ax.plot(lows, y, "|", color="k", ms=9)
    ax.plot(highs, y, "|", color="k", ms=9)
    ax.set_yticks(y)
    ax.set_yticklabels(names)
    ax.set_xscale("log")
    ax.set_xlabel("time constant (s)")
    ax.grid(axis="x", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def save_activity_projection(trace: RolloutTrace, path: str | Path,
                             neurons: list[str] | None = None) -> Path:
    """Per-neuron activation painted over the 2-D trajectory."""
    pose, act = activity_projection(trace)
    names = list(trace.neuron_names)
    wanted = neurons if neurons is not None else names
    idx = [names.index(n) for n in wanted]
    cols = 4
    rows = math.ceil(len(idx) / cols)
    fig, axes = plt.subplots(rows, cols, figsize=(2.9 * cols, 2.6 * rows),
                             sharex=True, sharey=True)
    axes = np.atleast_1d(axes).ravel()
    for ax, i in zip(axes, idx):
        sc = ax.scatter(pose[:, 0], pose[:, 1], c=act[:, i], cmap="viridis",
                        s=4, vmin=0.0, vmax=1.0)
        ax.set_title(names[i], fontsize=9)
        ax.set_aspect("equal", adjustable="box")
    for ax in axes[len(idx):]:
        ax.set_visible(False)
    fig.colorbar(sc, ax=list(axes[:len(idx)]), shrink=0.8,
                 label="normalized activation")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)
