"""Report figures. Everything renders off-screen with the Agg backend."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["STYLE", "plot_training_curves", "plot_grpo", "plot_overlap", "plot_group_scores"]

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}

# PNG metadata carries the matplotlib version by default; drop it so bytes
# depend only on the data.
_PNG_META = {"Software": None}


def _save(fig, path: str | Path) -> Path:
    path = Path(path)
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_training_curves(loss: Sequence[float], grad_norm: Sequence[float], path: str | Path) -> Path:
    """Loss and gradient norm against step, on twin panels."""
    steps = np.arange(len(loss))
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
        ax1.plot(steps, loss, color="C0", lw=1.2)
        ax1.set_xlabel("step")
        ax1.set_ylabel("loss (nats/token)")
        ax2.plot(steps, grad_norm, color="C1", lw=1.2)
        ax2.set_xlabel("step")
        ax2.set_ylabel("grad norm")
        ax2.set_yscale("log")
        fig.tight_layout()
        return _save(fig, path)


def plot_grpo(mean_reward: Sequence[float], kl: Sequence[float], path: str | Path, window: int = 20) -> Path:
    """Running-mean reward and KL to the reference per update."""
    r = np.asarray(mean_reward, dtype=float)
    w = max(1, min(window, len(r)))
    smooth = np.convolve(r, np.ones(w) / w, mode="valid") if len(r) else r
    with plt.rc_context(STYLE):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
        ax1.plot(np.arange(len(r)), r, color="C0", alpha=0.25, lw=0.8)
        ax1.plot(np.arange(w - 1, w - 1 + len(smooth)), smooth, color="C0", lw=1.4)
        ax1.set_xlabel("update")
        ax1.set_ylabel("mean group reward")
        ax2.plot(np.arange(len(kl)), kl, color="C2", lw=1.2)
        ax2.set_xlabel("update")
        ax2.set_ylabel("KL to reference")
        fig.tight_layout()
        return _save(fig, path)


def plot_overlap(doc_ids: Sequence[str], original: Sequence[float], augmented: Sequence[float], path: str | Path) -> Path:
    """Per-document overlap accuracy, plain vs augmented descriptions."""
    x = np.arange(len(doc_ids))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(x) + 2), 3))
        ax.bar(x - 0.2, original, width=0.4, label="original", color="C0")
        ax.bar(x + 0.2, augmented, width=0.4, label="augmented", color="C3")
        ax.set_xticks(x)
        ax.set_xticklabels(doc_ids, rotation=60, ha="right", fontsize=7)
        ax.set_ylim(0, 1.05)
        ax.set_ylabel("overlap accuracy")
        ax.legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)


def plot_group_scores(groups: Sequence[str], f1: Sequence[float], accuracy: Sequence[float], path: str | Path) -> Path:
    x = np.arange(len(groups))
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(x) + 2), 3))
        ax.bar(x - 0.2, accuracy, width=0.4, label="accuracy", color="C0")
        ax.bar(x + 0.2, f1, width=0.4, label="F1", color="C1")
        ax.set_xticks(x)
        ax.set_xticklabels(groups, rotation=30, ha="right")
        ax.set_ylim(0, 1.05)
        ax.legend(loc="lower right")
        fig.tight_layout()
        return _save(fig, path)
