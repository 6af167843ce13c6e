"""Matplotlib report figures rendered next to the delimited outputs:
density rasters, convergence curves and benchmark comparison bars.

Uses the Agg backend so report generation works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .export import DensityField, slice_3d
from .optimize import HistoryRecord


def density_figure(field: DensityField, path, title: str | None = None):
    """Grayscale density raster (material dark). 3D fields show the middle
    z slice."""
    if field.ndim == 3:
        field = slice_3d(field)
        title = (title or "density") + " (middle z slice)"
    arr = field.as_array()
    ny, nx = arr.shape
    fig, ax = plt.subplots(figsize=(max(4.0, 8.0 * nx / max(nx, ny)),
                                    max(2.0, 8.0 * ny / max(nx, ny))))
    ax.imshow(arr, cmap="gray_r", origin="lower", vmin=0.0, vmax=1.0,
              interpolation="nearest")
    ax.set_xticks([])
    ax.set_yticks([])
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def convergence_figure(history: list[HistoryRecord], path,
                       deltas: list[float] | None = None):
    """Compliance and V/V0 per epoch, one line per subtask."""
    if not history:
        raise ValueError("empty history")
    subtasks = sorted({r.subtask for r in history})
    fig, (ax_c, ax_v) = plt.subplots(2, 1, sharex=True, figsize=(7, 6))
    for s in subtasks:
        recs = [r for r in history if r.subtask == s]
        epochs = [r.epoch for r in recs]
        label = f"subtask {s}" if len(subtasks) > 1 else None
        ax_c.plot(epochs, [r.compliance for r in recs], label=label)
        ax_v.plot(epochs, [r.volume for r in recs], label=label)
        if deltas is not None and s < len(deltas):
            ax_v.axhline(deltas[s], color="gray", lw=0.8, ls="--")
    ax_c.set_ylabel("compliance")
    ax_c.set_yscale("log")
    ax_v.set_ylabel("V / V0")
    ax_v.set_xlabel("epoch")
    if len(subtasks) > 1:
        ax_c.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def comparison_figure(rows: list[dict], path):
    """Grouped bars of final compliance per benchmark case and method.

    rows: dicts with keys benchmark, delta, method, compliance (the same
    records the bench CSV holds).
    """
    cases = sorted({(r["benchmark"], r["delta"]) for r in rows})
    methods = sorted({r["method"] for r in rows})
    width = 0.8 / max(len(methods), 1)
    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(cases)), 4.5))
    x = np.arange(len(cases))
    for k, method in enumerate(methods):
        vals = []
        for case in cases:
            match = [r["compliance"] for r in rows
                     if (r["benchmark"], r["delta"]) == case
                     and r["method"] == method]
            vals.append(match[0] if match else np.nan)
        ax.bar(x + (k - (len(methods) - 1) / 2) * width, vals, width,
               label=method)
    ax.set_xticks(x)
    ax.set_xticklabels([f"{b}\nδ={d:g}" for b, d in cases], fontsize="small")
    ax.set_ylabel("final compliance")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
