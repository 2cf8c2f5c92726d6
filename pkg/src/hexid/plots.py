"""Minimal SVG line plots (deterministic output: no date metadata)."""

from __future__ import annotations

import numpy as np

from .kinematics import AXIS_LABELS

_META = {"Date": None}


def _plt():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    matplotlib.rcParams["svg.hashsalt"] = "hexid"
    return plt


def diagonal_plot(freqs, values, path, ylabel, truth=None, std=None, labels=None):
    """Curves ``values[:, j]`` vs frequency, with optional truth lines and 1-sigma bands."""
    plt = _plt()
    values = np.atleast_2d(np.asarray(values).T).T
    fig, ax = plt.subplots(figsize=(6, 4))
    for j in range(values.shape[1]):
        name = labels[j] if labels else f"{j}"
        ax.plot(freqs, values[:, j], marker="o", ms=3, label=name)
        if std is not None:
            s = np.atleast_2d(np.asarray(std).T).T[:, j]
            ax.fill_between(freqs, values[:, j] - s, values[:, j] + s, alpha=0.2)
        if truth is not None:
            t = np.atleast_2d(np.asarray(truth).T).T[:, j]
            ax.plot(freqs, t, "k--", lw=1)
    ax.set_xlabel("frequency [Hz]")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def matrix_grid_plot(freqs, mats, path, title, truth=None, names=AXIS_LABELS):
    """n x n grid of entry-vs-frequency panels (matrix layout)."""
    plt = _plt()
    n = mats.shape[1]
    fig, axes = plt.subplots(n, n, figsize=(2.0 * n, 1.6 * n), sharex=True, squeeze=False)
    for i in range(n):
        for j in range(n):
            ax = axes[i, j]
            ax.plot(freqs, mats[:, i, j], lw=1)
            if truth is not None:
                ax.plot(freqs, truth[:, i, j], "k--", lw=0.8)
            ax.tick_params(labelsize=5)
            if i == 0:
                ax.set_title(names[j] if n == len(names) else str(j), fontsize=7)
            if j == 0:
                ax.set_ylabel(names[i] if n == len(names) else str(i), fontsize=7)
    fig.suptitle(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)


def contour_plot(table, path, levels=(0, 2, 5, 10, 20)):
    """Clearance contour over the two joint angles."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 4.5))
    cs = ax.contourf(table.angles, table.angles, table.min_distance.T, levels=30)
    ax.contour(table.angles, table.angles, table.min_distance.T, levels=list(levels), colors="k", linewidths=0.6)
    fig.colorbar(cs, ax=ax, label="clearance [mm]")
    ax.set_xlabel("alpha [deg]")
    ax.set_ylabel("beta [deg]")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
