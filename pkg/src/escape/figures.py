"""Matplotlib figure rendering for report and evaluation outputs.

Figures are written to files next to the delimited output; nothing here
opens a display (Agg backend).
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

DPI = 150


def _bar(ax, names: Sequence[str], counts: Sequence[int], title: str) -> None:
    positions = np.arange(len(names))
    ax.bar(positions, counts, color="#4878a8")
    ax.set_xticks(positions)
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylabel("interactions")
    ax.set_title(title)


def counts_bar_chart(counts: Mapping[str, int], title: str, path: str | Path) -> Path:
    """Bar chart of a name -> count mapping, sorted by count descending."""
    rows = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    fig, ax = plt.subplots(figsize=(max(4.0, 0.6 * len(rows) + 2.0), 3.5))
    _bar(ax, [name for name, _ in rows], [count for _, count in rows], title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def accuracy_violin(train: Sequence[float], test: Sequence[float], path: str | Path) -> Path:
    """Distribution of train/test accuracy across the repeated splits."""
    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    parts = ax.violinplot([list(train), list(test)], showmedians=True, widths=0.8)
    for body in parts["bodies"]:
        body.set_facecolor("#4878a8")
        body.set_alpha(0.6)
    ax.set_xticks([1, 2])
    ax.set_xticklabels(["train", "test"])
    ax.set_ylabel("accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.set_title("accuracy across repeated splits")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def pca_scatter(projections: np.ndarray, labels: Sequence[str], path: str | Path) -> Path:
    """First two principal components, one color per label."""
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    labels = list(labels)
    for i, name in enumerate(sorted(set(labels))):
        rows = [j for j, label in enumerate(labels) if label == name]
        ax.scatter(projections[rows, 0], projections[rows, 1], s=14, alpha=0.8, label=name, color=f"C{i}")
    ax.set_xlabel("component 1")
    ax.set_ylabel("component 2")
    ax.set_title("similarity features, first two components")
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path
