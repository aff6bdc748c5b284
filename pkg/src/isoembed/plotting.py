"""Matplotlib figures written next to the CSV/JSON outputs of a solve."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .solver import SolveReport  # noqa: E402
from .spectral import GridSpec  # noqa: E402

FIGSIZE = (6.0, 4.0)
DPI = 120


def _finish(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
    return path


def plot_convergence(report: SolveReport, path: Path, title: str = "") -> Path:
    """Step norms and isometry residuals per iteration on a log axis."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    its = np.arange(1, len(report.step_norms) + 1)
    steps = np.maximum(np.asarray(report.step_norms, dtype=float), 1e-300)
    ax.semilogy(its, steps, "o-", label="step norm (C^2)")
    if report.residuals:
        ax.semilogy(its[:len(report.residuals)], np.maximum(report.residuals, 1e-300),
                    "s--", label="isometry residual")
    ax.set_xlabel("iteration")
    ax.set_ylabel("sup norm")
    ax.set_title(title or f"Picard iteration ({report.status})")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    return _finish(fig, path)


def plot_displacement(u0: np.ndarray, u: np.ndarray, grid: GridSpec, path: Path) -> Path:
    """Circle: both curves in the plane. Torus: heat map of |u - u0|."""
    v = np.sqrt(np.sum((u - u0) ** 2, axis=0))
    fig, ax = plt.subplots(figsize=FIGSIZE)
    if grid.dim == 1 and u.shape[0] == 2:
        close = lambda a: np.append(a, a[:1])
        ax.plot(close(u0[0]), close(u0[1]), "k--", lw=1, label="u0")
        ax.plot(close(u[0]), close(u[1]), "C0-", lw=1.5, label="u")
        ax.set_aspect("equal")
        ax.legend()
    elif grid.dim == 1:
        ax.plot(grid.x1d, v)
        ax.set_xlabel("x")
        ax.set_ylabel("|u - u0|")
    else:
        im = ax.imshow(v.T, origin="lower", extent=(0, 2 * np.pi, 0, 2 * np.pi), cmap="viridis")
        fig.colorbar(im, ax=ax, label="|u - u0|")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    ax.set_title("displacement")
    return _finish(fig, path)
