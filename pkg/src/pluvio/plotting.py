"""Report figures rendered straight to PNG (Agg canvas, no pyplot state)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from pluvio.evaluate import CODE_NO_EVIDENCE, CODE_RAIN, CODE_WARM_UP

# PNG text chunks carry the matplotlib version unless blanked; keep files reproducible
_PNG_META = {"Software": None}


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    return path


def detection_timeline(sequences: dict, path) -> Path:
    """One panel per sequence: raw and smoothed pi over frames, rain truth shaded.

    ``sequences`` maps name -> (DetectionTable, per-frame truth array).
    Tick marks along the bottom show frames decided as rain.
    """
    names = sorted(sequences)
    fig = Figure(figsize=(9, 2.4 * max(len(names), 1)))
    axes = fig.subplots(max(len(names), 1), 1, squeeze=False)[:, 0]
    for ax, name in zip(axes, names):
        table, truth = sequences[name]
        frames = np.arange(len(table))
        truth = np.asarray(truth, dtype=bool)
        ax.fill_between(frames, 0, 1, where=truth, step="mid", color="tab:blue", alpha=0.12, lw=0, label="rain (labels)")
        ax.plot(frames, table.pi_raw, ".", ms=2, color="0.55", label="pi (EM)")
        ax.plot(frames, table.pi_kalman, "-", lw=1, color="tab:red", label="pi (smoothed)")
        codes = np.array(table.codes)
        rain = frames[codes == CODE_RAIN]
        ax.plot(rain, np.full(len(rain), -0.04), "|", ms=4, color="k", label="decided rain")
        skipped = (codes == CODE_WARM_UP) | (codes == CODE_NO_EVIDENCE)
        ax.fill_between(frames, -0.08, 0, where=skipped, step="mid", color="0.85", lw=0)
        ax.set_xlim(0, max(len(frames) - 1, 1))
        ax.set_ylim(-0.08, 1.02)
        ax.set_ylabel("pi")
        ax.set_title(name, loc="right", fontsize=9)
    axes[-1].set_xlabel("frame")
    axes[0].legend(loc="lower left", bbox_to_anchor=(0.0, 1.0), fontsize=7, ncol=4, frameon=False)
    fig.tight_layout()
    return _save(fig, path)


def margin_heatmap(result, path, x_key="ks.d_c", y_key="decision.pi_rain") -> Path:
    """Best margin over all other grid axes for each (x, y) pair; feasible cells outlined."""
    xs = sorted({r[x_key] for r in result.rows}) if x_key in result.keys else [None]
    ys = sorted({r[y_key] for r in result.rows}) if y_key in result.keys else [None]
    grid = np.full((len(ys), len(xs)), -np.inf)
    for r in result.rows:
        i = ys.index(r.get(y_key))
        j = xs.index(r.get(x_key))
        grid[i, j] = max(grid[i, j], r["margin"])
    fig = Figure(figsize=(6.5, 4.5))
    ax = fig.subplots()
    lim = max(float(np.abs(grid[np.isfinite(grid)]).max(initial=0.0)), 1e-6)
    im = ax.imshow(grid, origin="lower", aspect="auto", cmap="RdBu", vmin=-lim, vmax=lim)
    fig.colorbar(im, ax=ax, label="best margin")
    ii, jj = np.nonzero(grid >= 0)
    ax.plot(jj, ii, "s", mfc="none", mec="k", ms=5, lw=0)
    ax.set_xticks(range(len(xs)), [f"{v:g}" if v is not None else "-" for v in xs], rotation=90, fontsize=7)
    ax.set_yticks(range(len(ys)), [f"{v:g}" if v is not None else "-" for v in ys], fontsize=7)
    ax.set_xlabel(x_key)
    ax.set_ylabel(y_key)
    fig.tight_layout()
    return _save(fig, path)
