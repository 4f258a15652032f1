"""Static SVG small multiples for impulse responses and counterfactuals.

Figures are built on bare ``Figure`` objects (no pyplot state) and saved
with a fixed hash salt and no date stamp, so re-rendering the same numbers
gives the same bytes.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib as mpl
import numpy as np
from matplotlib.figure import Figure

from .calendar import WeekStamp
from .structural import CounterfactualBands, IrfResult

STYLE = {
    "svg.hashsalt": "mfvar",
    "svg.fonttype": "path",
    "font.size": 8,
    "axes.titlesize": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "lines.linewidth": 1.2,
}
BAND_COLOR = "#4c72b0"
CF_COLOR = "#dd8452"


def _grid(n: int) -> tuple[int, int]:
    ncols = min(n, 3)
    return math.ceil(n / ncols), ncols


def _save(fig: Figure, path: str | Path) -> Path:
    path = Path(path)
    with mpl.rc_context(STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def _band(ax, x, lo, mid, hi, color, label=None) -> None:
    ax.fill_between(x, lo, hi, color=color, alpha=0.25, linewidth=0)
    ax.plot(x, mid, color=color, label=label)


def plot_irf(result: IrfResult, names: Sequence[str], path: str | Path, shock_name: str = "") -> Path:
    """One panel per variable: median response, shaded outer band, zero line."""
    levels = list(result.levels)
    lo, mid, hi = (result.quantiles[levels.index(q)] for q in (min(levels), 0.5, max(levels)))
    H, M = mid.shape
    rows, cols = _grid(M)
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(3.0 * cols, 2.2 * rows), layout="constrained")
        axes = fig.subplots(rows, cols, squeeze=False).ravel()
        x = np.arange(H)
        for i, ax in enumerate(axes):
            if i >= M:
                ax.set_visible(False)
                continue
            _band(ax, x, lo[:, i], mid[:, i], hi[:, i], BAND_COLOR)
            ax.axhline(0.0, color="red", linewidth=0.8)
            ax.set_title(names[i])
            ax.set_xlim(0, max(H - 1, 1))
            ax.set_xlabel("weeks")
        if shock_name:
            fig.suptitle(f"Responses to a one-standard-deviation {shock_name} shock")
    return _save(fig, path)


def plot_counterfactual(
    bands: CounterfactualBands,
    stamps: Sequence[WeekStamp],
    names: Sequence[str],
    path: str | Path,
    window_start: int | None = None,
) -> Path:
    """Two rows per variable: actual vs counterfactual on top, their difference below."""
    levels = list(bands.levels)
    pick = [levels.index(q) for q in (min(levels), 0.5, max(levels))]
    T, M = bands.actual.shape[1:]
    x = np.arange(T)
    cols = min(M, 3)
    blocks = math.ceil(M / cols)
    with mpl.rc_context(STYLE):
        fig = Figure(figsize=(3.2 * cols, 3.6 * blocks), layout="constrained")
        axes = fig.subplots(2 * blocks, cols, squeeze=False)
        step = max(1, T // 4)
        ticks = list(range(0, T, step))
        for i in range(blocks * cols):
            top, bottom = axes[2 * (i // cols), i % cols], axes[2 * (i // cols) + 1, i % cols]
            if i >= M:
                top.set_visible(False)
                bottom.set_visible(False)
                continue
            a = [bands.actual[k, :, i] for k in pick]
            c = [bands.counterfactual[k, :, i] for k in pick]
            d = [bands.difference[k, :, i] for k in pick]
            _band(top, x, *a, BAND_COLOR, "actual")
            _band(top, x, *c, CF_COLOR, "counterfactual")
            top.set_title(names[i])
            _band(bottom, x, *d, BAND_COLOR)
            bottom.axhline(0.0, color="red", linewidth=0.8)
            bottom.set_title(f"{names[i]}: actual - counterfactual")
            for ax in (top, bottom):
                if window_start is not None:
                    ax.axvline(window_start, color="0.5", linestyle=":", linewidth=0.8)
                ax.set_xticks(ticks, [str(stamps[t]) for t in ticks])
        axes[0, 0].legend(frameon=False, loc="best")
    return _save(fig, path)
