"""Matplotlib figures for evaluation reports and training histories.

Rendering uses the non-interactive Agg backend and writes PNG files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .evalkit import DistanceHistogram, RocCurve  # noqa: E402


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def plot_roc(curves: dict[str, tuple[RocCurve, float]], path, title: str = "ROC") -> Path:
    """One line per named curve, labelled with its AUC."""
    fig, ax = plt.subplots(figsize=(5, 5))
    for name, (roc, auc) in curves.items():
        ax.plot(roc.fpr, roc.tpr, label=f"{name} (AUC {auc:.3f})")
    ax.plot([0, 1], [0, 1], color="0.7", linestyle="--", linewidth=1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.01)
    ax.set_title(title)
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def plot_histogram(hist: DistanceHistogram, path, title: str = "Distance distribution") -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    centers = (hist.edges[:-1] + hist.edges[1:]) / 2
    width = hist.edges[1] - hist.edges[0]
    ax.bar(centers, hist.genuine, width=width, alpha=0.6, label="genuine (0)")
    ax.bar(centers, hist.forged, width=width, alpha=0.6, label="forged (1)")
    ax.set_xlabel("embedding distance")
    ax.set_ylabel("pairs")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_history(traces: dict[str, list], path, title: str = "Training history") -> Path:
    """``traces`` maps a run name to its list of epoch records."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, hist in traces.items():
        epochs = [h.epoch for h in hist]
        ax.plot(epochs, [h.train_loss for h in hist], marker="o", markersize=3, label=f"{name} train")
        ax.plot(epochs, [h.valid_loss for h in hist], marker="s", markersize=3, linestyle="--", label=f"{name} valid")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)
