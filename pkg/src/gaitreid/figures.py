"""Matplotlib rendering of CMC curves and per-stage mAP summaries.

Figures are written with a fixed style and empty PNG metadata so repeated
runs produce byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": None}}


def render_cmc(curves: dict[str, list[float]], path: str | Path, title: str) -> None:
    """Plot one CMC curve per labeled series (values indexed from rank 1)."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for label in sorted(curves):
        values = curves[label]
        ranks = range(1, len(values) + 1)
        ax.plot(ranks, [100.0 * v for v in values], marker="o", markersize=3, label=label)
    ax.set_xlabel("Rank")
    ax.set_ylabel("Matching rate (%)")
    ax.set_title(title)
    ax.set_ylim(0.0, 105.0)
    ax.grid(True, alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def render_map_bars(
    stage_means: dict[str, dict[str, tuple[float, float]]], path: str | Path
) -> None:
    """Grouped bars of mean mAP (+/- std) per stage, one group per loss."""
    losses = sorted(stage_means)
    stages = sorted({s for per_stage in stage_means.values() for s in per_stage})
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    width = 0.8 / max(len(losses), 1)
    for i, loss in enumerate(losses):
        xs = [j + i * width for j in range(len(stages))]
        means = [100.0 * stage_means[loss].get(s, (0.0, 0.0))[0] for s in stages]
        stds = [100.0 * stage_means[loss].get(s, (0.0, 0.0))[1] for s in stages]
        ax.bar(xs, means, width=width, yerr=stds, capsize=3, label=loss)
    ax.set_xticks([j + width * (len(losses) - 1) / 2 for j in range(len(stages))])
    ax.set_xticklabels(stages)
    ax.set_ylabel("mAP (%)")
    ax.set_ylim(0.0, 105.0)
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
