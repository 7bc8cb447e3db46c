"""Static SVG figures rendered alongside the delimited report files.

Figures are byte-deterministic: the SVG hash salt is derived from the run seed
and the date metadata is suppressed, so identical runs produce identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, path, hashsalt: str) -> None:
    with matplotlib.rc_context({"svg.hashsalt": hashsalt}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def save_error_histogram(path, errors_by_estimator: dict, hashsalt: str, bins: int = 40) -> None:
    """Overlaid histograms of per-replica errors, one per estimator."""
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    finite = {
        name: np.asarray(errs)[np.isfinite(errs)]
        for name, errs in errors_by_estimator.items()
    }
    top = max((e.max() for e in finite.values() if e.size), default=1.0)
    grid = np.linspace(0.0, max(top, 1e-6), bins + 1)
    for name, errs in finite.items():
        if errs.size:
            ax.hist(errs, bins=grid, alpha=0.5, label=name)
    ax.set_xlabel("total-variation error")
    ax.set_ylabel("replicas")
    ax.legend()
    fig.tight_layout()
    _save(fig, path, hashsalt)


def save_marginal_plot(path, curves: dict, hashsalt: str) -> None:
    """Step plot of one or more marginals on a shared grid."""
    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    for name, marginal in curves.items():
        ax.stairs(marginal.mass, marginal.edges, label=name)
    ax.set_xlabel("score")
    ax.set_ylabel("probability mass")
    ax.legend()
    fig.tight_layout()
    _save(fig, path, hashsalt)
