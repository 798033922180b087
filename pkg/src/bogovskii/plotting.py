"""Optional figures for the CLI.  matplotlib is imported lazily with the Agg backend."""

from __future__ import annotations

import numpy as np


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def solve_figure(path: str, points, v, div, F) -> None:
    """Quiver of v (2-D only) beside a div-vs-F scatter."""
    plt = _pyplot()
    points, v = np.asarray(points), np.asarray(v)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4.5))
    ax = axes[0]
    if points.shape[1] == 2:
        ax.quiver(points[:, 0], points[:, 1], v[:, 0], v[:, 1], np.linalg.norm(v, axis=1), cmap="viridis")
        ax.set_aspect("equal")
        ax.set_title("v")
    else:
        ax.hist(np.linalg.norm(v, axis=1), bins=40)
        ax.set_title("|v|")
    ax = axes[1]
    ax.plot(F, div, ".", ms=3)
    lo, hi = float(np.min(F)), float(np.max(F))
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("F")
    ax.set_ylabel("trace grad v")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def convergence_figure(path: str, eps, residuals) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    residuals = np.asarray(residuals)
    for j in range(residuals.shape[1]):
        if not np.all(np.isnan(residuals[:, j])):
            ax.loglog(eps, residuals[:, j], "o-", label=f"probe {j}")
    ax.set_xlabel("epsilon")
    ax.set_ylabel("residual")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def modulus_figure(path: str, rhos, omegas) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    keep = np.asarray(omegas) > 0
    ax.loglog(np.asarray(rhos)[keep], np.asarray(omegas)[keep], "-")
    ax.set_xlabel("rho")
    ax.set_ylabel("omega(rho)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
