"""Figures for CLI reports (matplotlib, headless)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_sweep(rows: list[dict], path, title: str = "", reference=None) -> Path:
    """Bound against the observed Bell value, one line per level.

    ``rows`` carry ``S_obs``, ``bound`` and ``level``; ``reference`` is an
    optional callable drawn as a dashed curve for comparison.
    """
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.6), constrained_layout=True)
    for level in sorted({r["level"] for r in rows}):
        pts = sorted((r["S_obs"], r["bound"]) for r in rows if r["level"] == level)
        xs, ys = zip(*pts)
        ax.plot(xs, ys, marker="o", ms=3, label=f"level {level}")
    if reference is not None:
        xs = np.linspace(min(r["S_obs"] for r in rows), max(r["S_obs"] for r in rows), 200)
        ax.plot(xs, [reference(v) for v in xs], "k--", lw=1, label="reference")
    ax.set_xlabel("observed Bell value")
    ax.set_ylabel("lower bound")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(frameon=False)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_convergence(history: list[dict], path, title: str = "") -> Path:
    """Gap and residuals per interior-point iteration on a log scale."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(5, 3.6), constrained_layout=True)
    its = [h["iter"] for h in history]
    for key in ("gap", "primal_residual", "dual_residual", "mu"):
        vals = [max(h[key], 1e-300) for h in history]
        ax.semilogy(its, vals, label=key.replace("_", " "))
    ax.set_xlabel("iteration")
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3, which="both")
    ax.legend(frameon=False)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
