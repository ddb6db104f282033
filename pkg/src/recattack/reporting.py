"""Delimited output and companion figures.

Every tabular report is CSV with a header row and accuracies printed with
six fractional digits; reports that are figure-shaped (sweep curves,
cross-robustness matrices) also render a PNG next to the CSV.  Output bytes
are a pure function of the rows, so identical runs produce identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_PNG_META = {"Software": None}  # keep PNG bytes free of version strings


def format_accuracy(value: float) -> str:
    return f"{value:.6f}"


def format_number(value: float) -> str:
    """Compact, round-trippable cell for radii, step sizes, grid values."""
    return f"{value:g}"


def write_csv(path: "str | Path", header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def figure_path(csv_path: "str | Path") -> Path:
    return Path(csv_path).with_suffix(".png")


def render_sweep_figure(
    path: "str | Path",
    axis_label: str,
    grid: Sequence[float],
    series: dict[str, Sequence[float]],
) -> None:
    """Robust accuracy vs the swept parameter, one line per attack."""
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    for name, values in series.items():
        ax.plot(grid, values, marker="o", markersize=3.5, label=name)
    ax.set_xlabel(axis_label)
    ax.set_ylabel("robust accuracy")
    ax.set_ylim(-0.02, 1.02)
    ax.grid(True, alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)


def render_attack_figure(
    path: "str | Path", names: Sequence[str], clean: float, robust: Sequence[float]
) -> None:
    """Per-attack robust accuracy bars against the clean-accuracy line."""
    fig, ax = plt.subplots(figsize=(0.9 + 0.8 * len(names), 3.2))
    ax.bar(range(len(names)), robust, color="tab:red", width=0.6)
    ax.axhline(clean, color="tab:gray", linestyle="--", linewidth=1, label="clean")
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right")
    ax.set_ylabel("robust accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)


def render_matrix_figure(
    path: "str | Path", matrix: np.ndarray, labels: Sequence[str]
) -> None:
    """Cross-robustness heatmap: rows evaluated, columns attacked."""
    fig, ax = plt.subplots(figsize=(4.2, 3.8))
    im = ax.imshow(matrix, vmin=0.0, vmax=1.0, cmap="viridis")
    ax.set_xticks(range(len(labels)), labels, rotation=45, ha="right")
    ax.set_yticks(range(len(labels)), labels)
    ax.set_xlabel("attacked model")
    ax.set_ylabel("evaluated model")
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            ax.text(
                j, i, f"{matrix[i, j]:.2f}",
                ha="center", va="center",
                color="white" if matrix[i, j] < 0.6 else "black", fontsize=8,
            )
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=150, metadata=_PNG_META)
    plt.close(fig)
