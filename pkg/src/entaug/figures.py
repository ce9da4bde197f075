"""Matplotlib figure rendering for run reports.

All entry points write PNG files next to the delimited outputs; the Agg
backend keeps this usable in headless environments.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import RunRecord  # noqa: E402


def run_curves(records: list[RunRecord], path) -> None:
    """Accuracy, loss, and entropy/magnitude trajectories for one run."""
    epochs = [r.epoch for r in records]
    fig, axes = plt.subplots(1, 3, figsize=(12, 3.2))
    axes[0].plot(epochs, [r.test_accuracy for r in records], marker="o", ms=3)
    axes[0].set_xlabel("epoch")
    axes[0].set_ylabel("test accuracy")
    axes[1].plot(epochs, [r.train_loss for r in records], label="total", marker="o", ms=3)
    axes[1].plot(epochs, [r.train_ce for r in records], label="ce", ls="--")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("train loss")
    axes[1].legend(fontsize=8)
    axes[2].plot(epochs, [r.mean_norm_entropy for r in records], label="entropy")
    axes[2].plot(epochs, [r.mean_magnitude for r in records], label="magnitude")
    axes[2].set_xlabel("epoch")
    axes[2].set_ylim(-0.02, 1.02)
    axes[2].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def magnitude_trajectories(series_by_arm: dict, path) -> None:
    """Mean magnitude per epoch for each arm of a comparison."""
    fig, ax = plt.subplots(figsize=(6, 3.6))
    for arm, series in series_by_arm.items():
        ax.plot(range(len(series)), series, label=arm)
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean magnitude")
    ax.set_ylim(-0.02, 1.02)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def bench_bars(report: dict, path) -> None:
    """Mean and p95 per-batch augmentation times per mode."""
    modes = list(report["modes"])
    means = [report["modes"][m]["mean_seconds"] for m in modes]
    p95s = [report["modes"][m]["p95_seconds"] for m in modes]
    fig, ax = plt.subplots(figsize=(6, 3.2))
    xs = range(len(modes))
    ax.bar([x - 0.2 for x in xs], means, width=0.4, label="mean")
    ax.bar([x + 0.2 for x in xs], p95s, width=0.4, label="p95")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(modes, fontsize=8)
    ax.set_ylabel("seconds / batch")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
