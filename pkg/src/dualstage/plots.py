"""Figure rendering for CLI reports. All figures go straight to files via
the Agg backend; nothing here opens a display.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_components(series, trend, seasonal, noise, path, title="Decomposition"):
    series = np.asarray(series)
    fig, axes = plt.subplots(4, 1, figsize=(10, 8), sharex=True)
    for ax, (name, values) in zip(axes, [("series", series), ("trend", trend),
                                         ("seasonal", seasonal), ("noise", noise)]):
        ax.plot(np.arange(len(series)), values, linewidth=0.9)
        ax.set_ylabel(name)
        ax.grid(True, alpha=0.3)
    axes[0].set_title(title)
    axes[-1].set_xlabel("step")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_correlations(rows, threshold, path):
    """Bar chart of rank-correlation coefficients with the cut lines drawn."""
    names = [r["variable"] for r in rows]
    rhos = [r["rho"] for r in rows]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    colors = ["tab:blue" if abs(r) >= threshold else "tab:gray" for r in rhos]
    ax.bar(names, rhos, color=colors)
    for y in (threshold, -threshold):
        ax.axhline(y, color="tab:red", linestyle="--", linewidth=0.8)
    ax.set_ylabel("Spearman rho")
    ax.set_ylim(-1.05, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    plt.setp(ax.get_xticklabels(), rotation=45, ha="right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_history(history, path):
    epochs = [row["epoch"] for row in history]
    fig, ax = plt.subplots(figsize=(8, 4.5))
    ax.plot(epochs, [row["train_mae"] for row in history], label="train MAE")
    ax.plot(epochs, [row["valid_mae"] for row in history], label="valid MAE")
    ax.set_xlabel("epoch")
    ax.set_ylabel("MAE")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_forecast(rows, truth, pred, path, title="Forecast vs. truth"):
    fig, ax = plt.subplots(figsize=(10, 4.5))
    ax.plot(rows, truth, label="truth", linewidth=0.9)
    ax.plot(rows, pred, label="forecast", linewidth=0.9)
    ax.set_xlabel("row")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
