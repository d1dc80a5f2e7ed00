"""Report figures. Everything renders off-screen to PNG files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (6.0, 3.8)


def _finish(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def learning_curves(rounds: Sequence[int], series: dict[str, Sequence[float]], metric: str, path) -> Path:
    """Test metric after each table, one line per training mode."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    for label, ys in series.items():
        ax.plot(rounds, ys, marker="o", ms=3, label=label)
    ax.set_xlabel("tables")
    ax.set_ylabel(metric.upper())
    ax.grid(alpha=0.3)
    ax.legend()
    return _finish(fig, path)


def traffic_breakdown(per_op: dict[str, dict], path, top: int = 12) -> Path:
    """Bytes and rounds per protocol operation (operations nest, so bars overlap in meaning)."""
    items = sorted(per_op.items(), key=lambda kv: kv[1]["bytes"], reverse=True)[:top]
    labels = [k for k, _ in items]
    mb = np.array([v["bytes"] for _, v in items]) / 1e6
    rounds = np.array([v["rounds"] for _, v in items])
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(FIGSIZE[0] * 1.6, FIGSIZE[1]))
    a1.barh(labels, mb, color="tab:blue")
    a1.set_xlabel("MB sent")
    a1.invert_yaxis()
    a2.barh(labels, rounds, color="tab:orange")
    a2.set_xlabel("rounds")
    a2.invert_yaxis()
    a2.set_yticklabels([])
    return _finish(fig, path)


def scaling(xs: Sequence[float], ys: Sequence[float], xlabel: str, ylabel: str, path,
            fit: bool = True, logy: bool = False) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.plot(xs, ys, "o", label="measured")
    if fit and len(xs) >= 2:
        k, b = np.polyfit(xs, ys, 1)
        grid = np.linspace(min(xs), max(xs), 50)
        ax.plot(grid, k * grid + b, "--", lw=1, label="linear fit")
        ax.legend()
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(alpha=0.3)
    return _finish(fig, path)
