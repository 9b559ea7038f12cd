"""Figure rendering for the CLI report paths.

Each reporting command writes a PNG next to its CSV output. All figures go
through the Agg backend so the toolkit stays headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

plt.rcParams.update({
    "figure.figsize": (6.0, 3.8),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_error_accumulation(table, path):
    """Tip displacement vs chain depth for local- vs global-perturbed chains."""
    fig, ax = plt.subplots()
    ax.plot(table["depth"], table["local"], "o-", label="local perturbation")
    ax.plot(table["depth"], table["global"], "s-", label="global perturbation")
    ax.set_xlabel("chain depth (bones)")
    ax.set_ylabel("tip displacement (m)")
    ax.set_title("Root-error accumulation by rotation representation")
    ax.legend()
    return _save(fig, path)


def plot_loss_curves(rows, path):
    """Training loss components over steps from the loss-log rows."""
    fig, ax = plt.subplots()
    steps = [r["step"] for r in rows]
    for key in ("total", "simple", "pos", "j", "s", "m"):
        values = np.array([r[key] for r in rows], dtype=float)
        if key != "total" and not np.any(values):
            continue
        ax.plot(steps, values, label=key, linewidth=1.0)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.set_title("Training loss")
    ax.legend(ncol=3)
    return _save(fig, path)


def plot_metric_bars(values, path):
    """Bar chart of the evaluation metrics."""
    fig, ax = plt.subplots()
    names = list(values)
    ax.bar(names, [values[n] for n in names], color="#4878a8")
    ax.set_ylabel("value")
    ax.set_title("Evaluation metrics")
    ax.tick_params(axis="x", rotation=30)
    return _save(fig, path)


def plot_smoothness(per_joint, names, path):
    """Per-joint RMS jerk bars."""
    fig, ax = plt.subplots()
    ax.bar(range(len(per_joint)), per_joint, color="#a85448")
    ax.set_xticks(range(len(per_joint)))
    ax.set_xticklabels(names, rotation=60, fontsize=6)
    ax.set_ylabel("RMS jerk (m/frame^3)")
    ax.set_title("Per-joint smoothness")
    return _save(fig, path)
