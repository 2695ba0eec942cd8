"""Parameter grid search over rain/dry snippets.

Candidate masks depend only on the frames and the background/candidate
parameters, so each snippet runs the background model once per distinct
setting of those keys. Fit-level keys (blob sizes, dm, EM) reuse the cached
blob tables, and the final thresholds (D_c, pi_rain) are swept in one
vectorised pass over the per-frame fits.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from pluvio.config import PipelineConfig, read_kv
from pluvio.errors import ConfigError, DataError
from pluvio.ingest import open_frame_source
from pluvio.pipeline import DetectionContext, _frames, candidate_mask, fit_blobs, roi_of
from pluvio.streaks import measure_blobs

log = logging.getLogger(__name__)

RAIN_MIN_FRACTION = 0.60
DRY_MAX_FRACTION = 0.40

MASK_KEYS = {
    "mog.k",
    "mog.learning_rate",
    "mog.background_ratio",
    "mog.init_variance",
    "mog.min_variance",
    "candidate.method",
    "candidate.c",
    "blob.connectivity",
}
SWEEP_KEYS = ("ks.d_c", "decision.pi_rain")


@dataclass(frozen=True)
class GridSpec:
    """Ordered ``{config key: [values]}``; combinations enumerate in product order."""

    axes: tuple

    @classmethod
    def from_dict(cls, axes: dict) -> "GridSpec":
        types = {f.name: f.type for f in fields(PipelineConfig)}
        out = []
        for key, values in axes.items():
            kind = types[PipelineConfig.attr_of(key)]
            if not values:
                raise ConfigError(f"grid axis {key!r} is empty")
            out.append((key, tuple(_as_field_type(v, kind, key) for v in values)))
        return cls(tuple(out))

    @property
    def keys(self) -> list[str]:
        return [k for k, _ in self.axes]

    @property
    def size(self) -> int:
        return math.prod(len(v) for _, v in self.axes)

    def combinations(self):
        keys = self.keys
        for values in itertools.product(*(v for _, v in self.axes)):
            yield dict(zip(keys, values))


def _as_field_type(value, kind, key):
    kind = kind.replace("Optional[", "").rstrip("]")
    if kind == "float" and isinstance(value, (int, float)):
        return float(value)
    if kind == "int":
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"grid axis {key!r} needs integers, got {value}")
        return int(value)
    return value


def expand_range(text: str) -> list:
    """Parse ``a, b, c``, ``[a:step:b]`` (inclusive) or ``[a:step:b)`` (stop excluded)."""
    text = text.strip()
    if text.startswith("[") and ":" in text:
        if text.endswith("]"):
            inclusive = True
        elif text.endswith(")"):
            inclusive = False
        else:
            raise ConfigError(f"bad range {text!r}")
        try:
            start, step, stop = (float(p) for p in text[1:-1].split(":"))
        except ValueError:
            raise ConfigError(f"bad range {text!r}; expected [start:step:stop]") from None
        if step <= 0:
            raise ConfigError(f"range step must be > 0 in {text!r}")
        n = int(math.floor((stop - start) / step + 1e-9))
        values = [round(start + i * step, 10) for i in range(n + 1)]
        if not inclusive:
            values = [v for v in values if v < stop - 1e-9 * step]
        if all(float(v).is_integer() for v in values) and all(
            float(p).is_integer() for p in text[1:-1].split(":")
        ):
            values = [int(v) for v in values]
        return values
    items = [p.strip() for p in text.strip("[]").split(",") if p.strip()]
    out = []
    for item in items:
        try:
            out.append(int(item))
        except ValueError:
            try:
                out.append(float(item))
            except ValueError:
                out.append(item)
    return out


def default_grid() -> GridSpec:
    """The default search space: 9600 combinations.

    D_c takes 20 inclusive values 0.01..0.20; pi_rain takes 15 values
    0.20..0.48 with the 0.50 endpoint excluded.
    """
    return GridSpec.from_dict(
        {
            "mog.warmup_frames": [500],
            "candidate.c": [3, 5],
            "blob.min_size": [4],
            "blob.max_size": expand_range("[50:50:200]"),
            "streak.dm": expand_range("[0.5:0.5:2.0]"),
            "em.max_iterations": [100],
            "ks.d_c": expand_range("[0.01:0.01:0.20]"),
            "decision.pi_rain": expand_range("[0.20:0.02:0.50)"),
        }
    )


def load_grid(path) -> GridSpec:
    return GridSpec.from_dict({k: expand_range(v) for k, v in read_kv(path).items()})


@dataclass(frozen=True)
class Snippet:
    path: Path
    tag: str
    frame_rate: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.tag not in ("rain", "dry"):
            raise DataError(f"snippet tag must be rain or dry, got {self.tag!r}")


def load_snippets(manifest) -> list[Snippet]:
    """Read a ``path,tag[,frame_rate]`` CSV; relative paths resolve against the manifest."""
    manifest = Path(manifest)
    try:
        with open(manifest, newline="") as fh:
            rows = [r for r in csv.DictReader(fh)]
    except OSError as exc:
        raise DataError(f"cannot read snippet manifest {manifest}: {exc}") from exc
    out = []
    for row in rows:
        p = Path(row["path"].strip())
        if not p.is_absolute():
            p = manifest.parent / p
        rate = row.get("frame_rate")
        out.append(Snippet(p, row["tag"].strip(), float(rate) if rate else None))
    return _named(out)


def _named(snippets) -> list[Snippet]:
    seen: dict[str, int] = {}
    out = []
    for s in snippets:
        base = s.name or Path(s.path).stem
        n = seen.get(base, 0)
        seen[base] = n + 1
        out.append(Snippet(s.path, s.tag, s.frame_rate, base if n == 0 else f"{base}#{n}"))
    return out


@dataclass
class GridResult:
    keys: list
    snippets: list
    rows: list = field(default_factory=list)

    @property
    def feasible(self) -> list:
        return [r for r in self.rows if r["feasible"]]

    def best(self) -> Optional[dict]:
        f = self.feasible
        return f[0] if f else None


def _group(items, keyfunc):
    groups: dict = {}
    for item in items:
        groups.setdefault(keyfunc(item), []).append(item)
    return groups


def sweep_decisions(pi_raw, ks, valid, d_c, pi_rain, mode, q_var, r_var) -> np.ndarray:
    """Rain flags for every (d_c[m], pi_rain[m]) pair over a frame sequence.

    Mirrors :func:`pluvio.temporal.rain_decision` for the pi component,
    which evolves independently of mu and sigma under diagonal noise.
    Returns a bool array of shape (M, F).
    """
    d_c = np.asarray(d_c, dtype=np.float64)[:, None]
    pr = np.asarray(pi_rain, dtype=np.float64)[:, None]
    passed = valid[None, :] & (ks[None, :] <= d_c)
    raw_hit = pi_raw[None, :] > pr
    if mode == "em":
        return passed & raw_hit
    m, f = passed.shape
    x = np.zeros(m)
    p = np.zeros(m)
    started = np.zeros(m, dtype=bool)
    out = np.zeros((m, f), dtype=bool)
    for t in range(f):
        p = np.where(started, p + q_var, p)
        smoothed = np.where(started, x, pi_raw[t])
        accept = passed[:, t] & raw_hit[:, t]
        gain = p * (1.0 / (p + r_var))
        upd = accept & started
        x = np.where(upd, x + gain * (pi_raw[t] - x), x)
        p = np.where(upd, (1.0 - gain) * p, p)
        init = accept & ~started
        x = np.where(init, pi_raw[t], x)
        p = np.where(init, r_var, p)
        out[:, t] = passed[:, t] & (smoothed > pr[:, 0]) & (started | init)
        started |= init
    return out


def _evaluate_snippet(args) -> np.ndarray:
    snippet, grid, base = args
    combos = list(grid.combinations())
    fractions = np.full(len(combos), np.nan)
    warmups = {int(c.get("mog.warmup_frames", base.mog_warmup_frames)) for c in combos}
    first_needed = min(warmups)

    def cfg_for(combo):
        return base.replace(**{PipelineConfig.attr_of(k): v for k, v in combo.items()})

    mask_groups = _group(range(len(combos)), lambda i: tuple(sorted((k, v) for k, v in combos[i].items() if k in MASK_KEYS)))
    for mask_key, idxs in mask_groups.items():
        mcfg = cfg_for(dict(mask_key)).replace(mog_warmup_frames=first_needed)
        source = open_frame_source(snippet.path, snippet.frame_rate or base.input_frame_rate, base.input_channel)
        ctx = DetectionContext(mcfg)
        frames = list(_cached_tables(ctx, source, roi_of(base)))
        n_frames = source.frame_count
        fit_groups = _group(
            idxs,
            lambda i: tuple(sorted((k, v) for k, v in combos[i].items() if k not in MASK_KEYS and k not in SWEEP_KEYS)),
        )
        for fit_key, fidxs in fit_groups.items():
            fcfg = cfg_for({**dict(mask_key), **dict(fit_key)})
            pi_raw = np.full(n_frames, np.nan)
            ks = np.full(n_frames, np.nan)
            for index, table in frames:
                fit = fit_blobs(table, fcfg)
                if fit is not None:
                    pi_raw[index], ks[index] = fit.params.pi, fit.ks
            valid = ~np.isnan(pi_raw)
            # frames before this combination's warm-up never reach the tracker
            sel = np.arange(n_frames) >= fcfg.mog_warmup_frames
            flags = sweep_decisions(
                np.nan_to_num(pi_raw[sel]),
                np.nan_to_num(ks[sel], nan=2.0),
                valid[sel],
                [cfg_for(combos[i]).ks_d_c for i in fidxs],
                [cfg_for(combos[i]).decision_pi_rain for i in fidxs],
                fcfg.decision_mode,
                fcfg.kalman_q_var,
                fcfg.kalman_r_var,
            )
            denom = max(int(sel.sum()), 1)
            fractions[fidxs] = flags.sum(axis=1) / denom
    return fractions


def _cached_tables(ctx, source, roi):
    """Blob tables for every frame that reaches the fit stage."""
    frames = _frames(source, roi)
    pending = next(frames, None)
    while pending is not None:
        nxt = next(frames, None)
        mask = candidate_mask(ctx, pending, nxt)
        if not isinstance(mask, str):
            yield pending.index, measure_blobs(mask, ctx.config.blob_connectivity)
        pending = nxt


def grid_search(
    grid: GridSpec,
    snippets,
    base: Optional[PipelineConfig] = None,
    rain_min: float = RAIN_MIN_FRACTION,
    dry_max: float = DRY_MAX_FRACTION,
    jobs: int = 1,
) -> GridResult:
    """Score every grid point on every snippet and rank the feasible ones.

    A point is feasible when each rain snippet is flagged on at least
    ``rain_min`` of its post-warm-up frames and each dry snippet on at most
    ``dry_max``. Points are ranked feasible first, then by margin: the
    smallest distance, over snippets, between the detection fraction and
    its bound (positive when satisfied). Ties keep enumeration order.
    """
    base = base or PipelineConfig()
    if grid.size == 0:
        raise ConfigError("empty grid")
    snippets = sorted(_named(snippets), key=lambda s: s.name)
    tags = {s.tag for s in snippets}
    if tags != {"rain", "dry"}:
        raise DataError("grid search needs at least one rain and one dry snippet")
    work = [(s, grid, base) for s in snippets]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_snippet = list(pool.map(_evaluate_snippet, work))
    else:
        per_snippet = [_evaluate_snippet(w) for w in work]

    fractions = np.stack(per_snippet, axis=1)  # (combos, snippets)
    is_rain = np.array([s.tag == "rain" for s in snippets])
    slack = np.where(is_rain[None, :], fractions - rain_min, dry_max - fractions)
    margin = slack.min(axis=1)
    feasible = margin >= -1e-12
    rows = []
    for i, combo in enumerate(grid.combinations()):
        row = dict(combo)
        row.update({f"frac:{s.name}": float(fractions[i, j]) for j, s in enumerate(snippets)})
        row.update(index=i, feasible=bool(feasible[i]), margin=float(margin[i]))
        rows.append(row)
    rows.sort(key=lambda r: (not r["feasible"], -r["margin"], r["index"]))
    for rank, row in enumerate(rows, 1):
        row["rank"] = rank
    return GridResult(grid.keys, [s.name for s in snippets], rows)


def write_grid_results(result: GridResult, path) -> Path:
    path = Path(path)
    cols = ["rank", "index", *result.keys, *(f"frac:{n}" for n in result.snippets), "feasible", "margin"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for row in result.rows:
            w.writerow([_cell(row[c]) for c in cols])
    return path


def _cell(v):
    if isinstance(v, bool):
        return int(v)
    if isinstance(v, float):
        return f"{v:.6f}" if not v.is_integer() or abs(v) < 1e6 else str(v)
    return v
