"""Label alignment, confusion counts, Acc/F1/MCC and report files."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from pluvio.errors import DataError

# detection CSV decision codes
CODE_RAIN, CODE_DRY, CODE_WARM_UP, CODE_NO_EVIDENCE = "1", "0", "W", "N"


@dataclass(frozen=True, eq=False)
class LabelSeries:
    """Binary rain labels, one per minute (gauge data) or per frame (synthetic)."""

    rain: np.ndarray
    unit: str = "minute"
    gauge: str = "laser"


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    f1: float
    mcc: float


def read_labels(path) -> LabelSeries:
    """Read ``minute,rain``, ``minute,mm_per_hour`` or ``frame,rain`` CSV."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise DataError(f"cannot read labels {path}: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: empty label file")
    header = [h.strip() for h in rows[0]]
    if len(header) != 2 or header[0] not in ("minute", "frame") or header[1] not in ("rain", "mm_per_hour"):
        raise DataError(f"{path}: unsupported label header {','.join(header)}")
    unit, column = header
    try:
        idx = np.array([int(r[0]) for r in rows[1:]], dtype=np.int64)
        val = np.array([float(r[1]) for r in rows[1:]], dtype=np.float64)
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed label row: {exc}") from exc
    if len(idx) == 0:
        raise DataError(f"{path}: no label rows")
    if not np.array_equal(idx, np.arange(len(idx))):
        raise DataError(f"{path}: {unit} indices must be contiguous from 0")
    if column == "rain" and not np.all(np.isin(val, (0.0, 1.0))):
        raise DataError(f"{path}: rain column must hold 0 or 1")
    return LabelSeries(val > 0, unit=unit, gauge="synthetic" if unit == "frame" else "laser")


def per_minute_to_per_frame(labels: LabelSeries, frame_rate: float, frame_count: int) -> np.ndarray:
    """Expand per-minute labels: frame f takes minute floor(f / (60 * frame_rate))."""
    if frame_rate <= 0:
        raise ValueError(f"frame_rate must be > 0, got {frame_rate}")
    rain = np.asarray(labels.rain, dtype=bool)
    if labels.unit == "frame":
        if len(rain) < frame_count:
            raise DataError(f"labels cover {len(rain)} frames, video has {frame_count}")
        return rain[:frame_count].copy()
    minute = np.floor(np.arange(frame_count) / (60.0 * frame_rate)).astype(np.int64)
    if frame_count and minute[-1] >= len(rain):
        raise DataError(
            f"labels cover {len(rain)} minutes but the video needs {int(minute[-1]) + 1} at {frame_rate:g} fps"
        )
    return rain[minute]


def confusion(predictions, truth, no_evidence_as: str = "exclude") -> ConfusionMatrix:
    """Count TP/TN/FP/FN over per-frame decision codes.

    ``predictions`` holds codes "1", "0", "W", "N" (or booleans). Warm-up
    frames are always excluded; no-evidence frames are excluded or counted
    as no-rain according to ``no_evidence_as``.
    """
    if no_evidence_as not in ("exclude", "no-rain"):
        raise ValueError(f"no_evidence_as must be exclude or no-rain, got {no_evidence_as!r}")
    codes = np.array([_code(p) for p in predictions], dtype=object)
    truth = np.asarray(truth, dtype=bool)
    if len(codes) != len(truth):
        raise ValueError(f"length mismatch: {len(codes)} predictions vs {len(truth)} labels")
    keep = codes != CODE_WARM_UP
    if no_evidence_as == "exclude":
        keep &= codes != CODE_NO_EVIDENCE
    pred = codes[keep] == CODE_RAIN
    act = truth[keep]
    return ConfusionMatrix(
        tp=int(np.sum(pred & act)),
        tn=int(np.sum(~pred & ~act)),
        fp=int(np.sum(pred & ~act)),
        fn=int(np.sum(~pred & act)),
    )


def _code(p) -> str:
    if isinstance(p, (bool, np.bool_)):
        return CODE_RAIN if p else CODE_DRY
    if isinstance(p, (int, np.integer)):
        return CODE_RAIN if p else CODE_DRY
    p = str(p)
    if p not in (CODE_RAIN, CODE_DRY, CODE_WARM_UP, CODE_NO_EVIDENCE):
        raise ValueError(f"unknown decision code {p!r}")
    return p


def metrics(cm: ConfusionMatrix) -> MetricSet:
    """Accuracy, F1 and Matthews correlation; MCC is 0 when any marginal sum is 0."""
    if cm.total <= 0:
        raise ValueError("empty confusion matrix")
    tp, tn, fp, fn = (float(v) for v in (cm.tp, cm.tn, cm.fp, cm.fn))
    accuracy = (tp + tn) / (tp + tn + fp + fn)
    f1_den = 2 * tp + fp + fn
    f1 = 2 * tp / f1_den if f1_den else 0.0
    sums = (tp + fp, tp + fn, tn + fp, tn + fn)
    if min(sums) == 0:
        mcc = 0.0
    else:
        mcc = (tp * tn - fp * fn) / math.sqrt(sums[0] * sums[1] * sums[2] * sums[3])
    return MetricSet(accuracy, f1, mcc)


@dataclass(frozen=True, eq=False)
class DetectionTable:
    """Parsed detection CSV. Missing numeric cells are NaN."""

    codes: list
    pi_raw: np.ndarray
    pi_kalman: np.ndarray
    ks_d: np.ndarray
    meta: dict

    def __len__(self):
        return len(self.codes)


def _num(cell: str) -> float:
    return float(cell) if cell.strip() else math.nan


def read_detections(path) -> DetectionTable:
    """Parse a detection CSV; ``# key=value`` comment tokens land in ``meta``."""
    meta: dict = {}
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read detections {path}: {exc}") from exc
    body = []
    for line in lines:
        if line.startswith("#"):
            if line.startswith("# truncated"):
                meta["truncated"] = line[2:]
                continue
            for token in line[1:].split():
                key, sep, value = token.partition("=")
                if sep:
                    meta[key] = value
        elif line.strip():
            body.append(line)
    if not body or body[0].split(",") != ["frame", "decision", "pi_raw", "pi_kalman", "ks_d"]:
        raise DataError(f"{path}: missing detection header")
    codes, nums = [], []
    try:
        for expected, row in enumerate(csv.reader(body[1:])):
            if int(row[0]) != expected:
                raise DataError(f"{path}: frame {row[0]} out of order (expected {expected})")
            codes.append(_code(row[1]))
            nums.append([_num(c) for c in row[2:5]])
    except (ValueError, IndexError) as exc:
        raise DataError(f"{path}: malformed detection row: {exc}") from exc
    arr = np.array(nums, dtype=np.float64).reshape(-1, 3)
    return DetectionTable(codes, arr[:, 0], arr[:, 1], arr[:, 2], meta)


@dataclass(frozen=True)
class SequenceResult:
    cm: ConfusionMatrix
    metrics: MetricSet
    config_hash: str = ""
    warm_up: int = 0
    no_evidence: int = 0


def evaluate_sequence(codes, truth, config_hash="", no_evidence_as="exclude") -> SequenceResult:
    cm = confusion(codes, truth, no_evidence_as)
    return SequenceResult(
        cm,
        metrics(cm),
        config_hash,
        warm_up=sum(c == CODE_WARM_UP for c in codes),
        no_evidence=sum(c == CODE_NO_EVIDENCE for c in codes),
    )


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = time.gmtime(int(epoch)) if epoch else time.gmtime()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", t)


def report_rows(results: dict[str, SequenceResult]) -> list[dict]:
    rows = []
    for name in sorted(results):
        r = results[name]
        rows.append(
            {
                "sequence": name,
                **asdict(r.cm),
                "acc": round(r.metrics.accuracy, 6),
                "f1": round(r.metrics.f1, 6),
                "mcc": round(r.metrics.mcc, 6),
                "warm_up_frames": r.warm_up,
                "no_evidence_frames": r.no_evidence,
                "config_hash": r.config_hash,
            }
        )
    return rows


def format_table(rows: list[dict]) -> str:
    cols = ["sequence", "tp", "tn", "fp", "fn", "acc", "f1", "mcc"]
    header = ["Sequence", "TP", "TN", "FP", "FN", "Acc", "F1", "MCC"]
    cells = [
        [str(r["sequence"])] + [str(r[c]) for c in cols[1:5]] + [f"{r[c]:.4f}" for c in cols[5:]] for r in rows
    ]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(header)]
    fmt = lambda row: "  ".join(  # noqa: E731
        v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(row, widths))
    )
    lines = [fmt(header), "  ".join("-" * w for w in widths)] + [fmt(c) for c in cells]
    return "\n".join(lines) + "\n"


def emit_report(results: dict[str, SequenceResult], path) -> tuple[Path, Path]:
    """Write ``path`` (JSON keyed by sequence name) and a ``.txt`` table beside it.

    Sequences appear sorted by name. The only run-dependent value is
    ``_meta.generated_at`` (pinned by SOURCE_DATE_EPOCH when set).
    """
    from pluvio import __version__

    path = Path(path)
    rows = report_rows(results)
    doc = {r["sequence"]: {k: v for k, v in r.items() if k != "sequence"} for r in rows}
    doc["_meta"] = {"generated_at": _timestamp(), "tool": f"pluvio {__version__}"}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        table = path.with_suffix(".txt")
        table.write_text(format_table(rows))
    except OSError as exc:
        raise DataError(f"cannot write report {path}: {exc}") from exc
    return path, table
