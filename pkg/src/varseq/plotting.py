"""Figures for the CLI report path.  Everything renders off-screen to files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
    "legend.frameon": False,
    "svg.hashsalt": "varseq",
}


def _save(fig, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    meta = {"Software": None} if path.endswith(".png") else None
    fig.savefig(path, bbox_inches="tight", metadata=meta)
    plt.close(fig)
    return path


def plot_gradient_check(report, axes, path, fields=None, coords=None):
    """Symbolic E against the finite-difference action gradient.

    One-dimensional bases get curves (and the pointwise error on a log
    scale); two-dimensional bases get the error map of the first field.
    """
    fields = list(fields or report.symbolic)
    coords = list(coords or ["x", "y"])
    with plt.rc_context(STYLE):
        if len(axes) == 1:
            x = axes[0]
            fig, (ax, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.6))
            for f in fields:
                m = report.mask
                ax.plot(x[m], report.symbolic[f][m], lw=1.6, label=f"E[{f}] symbolic")
                ax.plot(x[m], report.numeric[f][m], ls="none", marker=".", ms=3, label=f"E[{f}] grid")
                err = np.abs(report.symbolic[f][m] - report.numeric[f][m])
                ax2.semilogy(x[m], np.maximum(err, 1e-300), lw=1, label=f)
            ax.set_ylabel("Euler-Lagrange value")
            ax.legend(fontsize=8)
            ax2.set_xlabel(coords[0])
            ax2.set_ylabel("|error|")
        else:
            f = fields[0]
            err = np.abs(report.symbolic[f] - report.numeric[f])
            err = np.where(report.mask, err, np.nan)
            fig, ax = plt.subplots()
            im = ax.imshow(
                err.T,
                origin="lower",
                extent=(axes[0][0], axes[0][-1], axes[1][0], axes[1][-1]),
                aspect="auto",
                cmap="viridis",
            )
            fig.colorbar(im, ax=ax, label=f"|E[{f}] - grad S|")
            ax.set_xlabel(coords[0])
            ax.set_ylabel(coords[1])
            ax.grid(False)
        kind = "relative" if report.relative else "absolute"
        fig.suptitle(f"action gradient check, max {kind} error {report.max_error:.2e}")
        return _save(fig, path)


def plot_jacobi(solution, path, fields=None, coord="t"):
    """Jacobi fields of the fundamental solution and ``det Y`` with the
    conjugate points marked."""
    t = solution.t
    Y = solution.values
    with plt.rc_context(STYLE):
        fig, (ax, ax2) = plt.subplots(2, 1, sharex=True, figsize=(6.4, 5.6))
        if Y.ndim == 3:
            m = Y.shape[1]
            names = list(fields or range(m))
            for k in range(m):
                for i in range(m):
                    ax.plot(t, Y[:, i, k], lw=1.2, label=f"{names[i]} (start {names[k]})")
        else:
            ax.plot(t, Y, lw=1.2)
        ax.set_ylabel("Jacobi field")
        ax.legend(fontsize=7, ncol=2)
        ax2.plot(t, solution.determinant, color="k", lw=1.2)
        ax2.axhline(0.0, color="0.5", lw=0.8)
        for c in solution.conjugate_points:
            ax2.axvline(c, color="tab:red", ls="--", lw=1)
            ax.axvline(c, color="tab:red", ls="--", lw=1)
        ax2.set_ylabel("det Y")
        ax2.set_xlabel(coord)
        first = solution.conjugate_points[0] if solution.conjugate_points else None
        title = "no conjugate point" if first is None else f"first conjugate point {coord}* = {first:.9f}"
        fig.suptitle(title)
        return _save(fig, path)
