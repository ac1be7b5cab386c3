"""Figures from report data (non-interactive Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 120,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return str(path)


def plot_trace(trace, path):
    """Quotient and stationarity residual per descent iteration, one color per exponent t."""
    with plt.rc_context(STYLE):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
        ts = sorted({row["t"] for row in trace})
        for t in ts:
            rows = [r for r in trace if r["t"] == t]
            it = [r["iteration"] for r in rows]
            a1.plot(it, [r["quotient"] for r in rows], marker=".", label=f"t={t:.3g}")
            a2.semilogy(it, [max(r["residual"], 1e-300) for r in rows], marker=".")
        a1.set_xlabel("iteration")
        a1.set_ylabel("quotient")
        a2.set_xlabel("iteration")
        a2.set_ylabel("residual")
        if ts:
            a1.legend(frameon=False)
        return _save(fig, path)


def plot_field(values, path, title=None, axes=(0, 1)):
    """Heat map of a grid field on the plane of two grid axes (other axes at index 0)."""
    values = np.asarray(values, float)
    index = [0] * values.ndim
    for a in axes:
        index[a] = slice(None)
    plane = values[tuple(index)]
    if plane.ndim == 1:
        plane = plane[:, None]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        im = ax.imshow(plane.T, origin="lower", aspect="auto", cmap="viridis")
        fig.colorbar(im, ax=ax)
        ax.set_xlabel(f"axis {axes[0]}")
        ax.set_ylabel(f"axis {axes[1]}")
        ax.grid(False)
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_bubble(result, path):
    """Q*C of the transplanted bubbles against eps with the reference levels."""
    rows = result["rows"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        eps = [r["eps"] for r in rows]
        ax.plot(eps, [r["quotient_times_C"] for r in rows], marker="o", label="Q C")
        for key, style in (("level_tight", ":"), ("level_bubble", "--"), ("level_stated", "-.")):
            ax.axhline(result[key], linestyle=style, color="k", linewidth=0.8, label=key)
        ax.set_xscale("log")
        ax.set_xlabel("eps")
        ax.legend(frameon=False)
        return _save(fig, path)
