"""Figure rendering for the report path.

All figures go straight to PNG files next to the delimited output; nothing
interactive.  Helpers take plain arrays so they stay decoupled from the
experiment objects.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "save_bars",
    "save_convergence",
    "save_density_overlay",
    "save_error_series",
    "save_residuals",
    "save_scatter_displacement",
]

plt.rcParams.update(
    {
        "figure.figsize": (7.0, 4.4),
        "figure.dpi": 110,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "font.size": 10,
    }
)


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def save_density_overlay(path, centers, empirical, reference, xlabel, title,
                         emp_label="ensemble", ref_label="|psi|^2"):
    fig, ax = plt.subplots()
    width = centers[1] - centers[0]
    ax.bar(centers, empirical, width=width, alpha=0.45, label=emp_label)
    ax.plot(centers, reference, "k-", lw=1.5, label=ref_label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("probability per bin")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def save_error_series(path, times, errors, tolerance, title):
    fig, ax = plt.subplots()
    ax.semilogy(times, errors, "o-", ms=3)
    ax.axhline(tolerance, color="r", ls="--", label=f"tolerance {tolerance:g}")
    ax.set_xlabel("time")
    ax.set_ylabel("max |integrated - exact|")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def save_bars(path, labels, values, title, ylabel, hline=None, hline_label=None):
    fig, ax = plt.subplots()
    ax.bar(range(len(values)), values, tick_label=labels)
    if hline is not None:
        ax.axhline(hline, color="r", ls="--", label=hline_label or str(hline))
        ax.legend()
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    return _finish(fig, path)


def save_residuals(path, names, residuals, tolerances, title):
    fig, ax = plt.subplots(figsize=(8.0, 4.4))
    x = np.arange(len(names))
    ax.semilogy(x, np.maximum(residuals, 1e-18), "o", label="residual")
    ax.semilogy(x, tolerances, "r_", ms=14, label="tolerance")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("residual")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)


def save_scatter_displacement(path, initial, final, displacement, title, max_points=2000):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9.5, 4.2))
    k = min(max_points, len(initial))
    ax1.scatter(initial[:k, 0], initial[:k, 1], s=2, alpha=0.4, label="start")
    ax1.scatter(final[:k, 0], final[:k, 1], s=2, alpha=0.4, label="end")
    ax1.set_aspect("equal")
    ax1.set_xlabel("x")
    ax1.set_ylabel("y")
    ax1.legend(markerscale=4)
    ax2.hist(displacement, bins=60)
    ax2.set_xlabel("per-trial displacement")
    ax2.set_ylabel("count")
    fig.suptitle(title)
    return _finish(fig, path)


def save_convergence(path, times, plus_mass, minus_mass, title):
    fig, ax = plt.subplots()
    ax.semilogy(times, 1.0 - np.asarray(plus_mass), "o-", label="1 - p_T(+ | up)")
    ax.semilogy(times, np.asarray(minus_mass), "s-", label="p_T(+ | down)")
    ax.set_xlabel("duration T")
    ax.set_ylabel("distance from projection")
    ax.set_title(title)
    ax.legend()
    return _finish(fig, path)
