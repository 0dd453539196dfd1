"""Figures written next to the delimited outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

AXIS_LABELS = {"dropout": "Dropout probability", "walk_length": "Random walk length"}


def _finish(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.tight_layout()
    # fixed metadata keeps the bytes stable between identical runs
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def plot_sweep(rows: list[dict], axis: str, path: str | Path) -> Path:
    """AUC and GAUC against the swept value."""
    xs = [r[axis] for r in rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    ax.plot(xs, [r["auc"] for r in rows], "o-", label="AUC")
    ax.plot(xs, [r["gauc"] for r in rows], "s--", label="GAUC")
    ax.set_xlabel(AXIS_LABELS.get(axis, axis))
    ax.set_ylabel("score")
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    return _finish(fig, path)


def plot_losses(report: dict, path: str | Path) -> Path:
    """Per-epoch training loss of the embedder and the ranker."""
    stats = report["stats"]
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2))
    for ax, key, title in zip(axes, ("embed_loss", "rank_loss"), ("embedding (SGNS)", "ranker (NLL)")):
        ys = stats.get(key, [])
        ax.plot(range(1, len(ys) + 1), ys, "o-")
        ax.set_title(title)
        ax.set_xlabel("epoch")
        ax.set_ylabel("mean loss")
        ax.grid(alpha=0.3)
    return _finish(fig, path)
