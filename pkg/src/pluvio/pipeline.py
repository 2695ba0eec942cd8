"""Per-frame detection loop and whole-video processing.

Stage order per frame: background update, candidate extraction, connected
components (with moments), size filter, streak geometry, HOS, EM fit, KS
gate, rain decision.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

from pluvio.bgmodel import MoGModel, extract_candidates, photometric_candidates
from pluvio.config import PipelineConfig
from pluvio.errors import DataError
from pluvio.evaluate import CODE_DRY, CODE_NO_EVIDENCE, CODE_RAIN, CODE_WARM_UP
from pluvio.hosmix import FitReport, em_fit, hos_from_arrays, ks_gate
from pluvio.ingest import Frame, FrameSource, RoiSpec, apply_roi
from pluvio.streaks import BlobTable, measure_blobs, table_streaks
from pluvio.temporal import NO_EVIDENCE, NO_RAIN, RAIN, WARM_UP, RainDecision, RainTracker

log = logging.getLogger(__name__)

CSV_HEADER = "frame,decision,pi_raw,pi_kalman,ks_d"
_CODES = {RAIN: CODE_RAIN, NO_RAIN: CODE_DRY, WARM_UP: CODE_WARM_UP, NO_EVIDENCE: CODE_NO_EVIDENCE}


class FrameError(DataError):
    def __init__(self, index, exc):
        super().__init__(f"frame {index}: {exc}")
        self.index = index


@dataclass(frozen=True, eq=False)
class DetectionSeries:
    records: list
    config_hash: str

    def __len__(self):
        return len(self.records)

    @property
    def codes(self) -> list[str]:
        return [_CODES[r.decision] for r in self.records]


def fit_blobs(table: BlobTable, cfg: PipelineConfig, trace: Optional[Callable] = None) -> Optional[FitReport]:
    """Size filter, geometry, HOS and EM for one frame; None when nothing survives."""
    trace = trace or (lambda stage: None)
    kept = table.select(cfg.blob_min_size, cfg.blob_max_size)
    trace("filter_by_size")
    theta, dtheta, weight = table_streaks(kept, cfg.streak_dm)
    trace("streak_geometry")
    if len(theta) == 0:
        return None
    hos = hos_from_arrays(theta, dtheta, weight, cfg.hos_min_dtheta)
    trace("build_hos")
    if not hos.total > 0:
        return None
    fit = em_fit(hos, cfg.em_max_iterations, cfg.em_tolerance)
    trace("em_fit")
    return fit


class DetectionContext:
    """Mutable per-stream state: background model, Kalman tracker, frame buffer."""

    def __init__(self, config: PipelineConfig, trace: Optional[list] = None):
        self.config = config
        self.mog = MoGModel(
            config.mog_k,
            config.mog_learning_rate,
            config.mog_background_ratio,
            config.mog_warmup_frames,
            config.mog_init_variance,
            config.mog_min_variance,
        )
        self.tracker = RainTracker(
            config.decision_pi_rain, config.decision_mode, config.kalman_q_var, config.kalman_r_var
        )
        self.prev: Optional[Frame] = None
        self.trace = trace

    def _mark(self, stage: str) -> None:
        if self.trace is not None:
            self.trace.append(stage)


def candidate_mask(ctx: DetectionContext, frame: Frame, lookahead: Optional[Frame] = None):
    """Run the candidate stage; returns the mask, or a decision string for skipped frames."""
    cfg = ctx.config
    if cfg.candidate_method == "mog":
        fg, bg = ctx.mog.update(frame)
        ctx._mark("mog_update")
        if frame.index < cfg.mog_warmup_frames:
            return WARM_UP
        mask = extract_candidates(fg, bg, cfg.candidate_c).mask
    else:
        prev, ctx.prev = ctx.prev, frame
        if frame.index < cfg.mog_warmup_frames:
            return WARM_UP
        if prev is None or lookahead is None:
            return NO_EVIDENCE
        mask = photometric_candidates(prev, frame, lookahead, cfg.candidate_c).mask
    ctx._mark("extract_candidates")
    return mask


def decide(ctx: DetectionContext, index: int, mask) -> RainDecision:
    cfg = ctx.config
    table = measure_blobs(mask, cfg.blob_connectivity)
    ctx._mark("connected_components")
    fit = fit_blobs(table, cfg, ctx._mark)
    if fit is None:
        return ctx.tracker.skip(index, NO_EVIDENCE)
    passed = ks_gate(fit.ks, cfg.ks_d_c)
    ctx._mark("ks_gate")
    decision = ctx.tracker.step(index, fit.params, fit.ks, passed)
    ctx._mark("rain_decision")
    return decision


def process_frame(ctx: DetectionContext, frame: Frame, lookahead: Optional[Frame] = None) -> RainDecision:
    """Classify one frame. ``lookahead`` (next frame) is used by the photometric extractor only."""
    try:
        mask = candidate_mask(ctx, frame, lookahead)
        if isinstance(mask, str):
            return ctx.tracker.skip(frame.index, mask)
        return decide(ctx, frame.index, mask)
    except DataError:
        raise
    except (ValueError, ArithmeticError) as exc:
        raise FrameError(frame.index, exc) from exc


def _fmt(v: float) -> str:
    return "" if v is None or math.isnan(v) else f"{v:.6f}"


def format_record(r: RainDecision) -> str:
    return f"{r.index},{_CODES[r.decision]},{_fmt(r.pi_raw)},{_fmt(r.pi_smoothed)},{_fmt(r.ks_d)}"


def roi_of(config: PipelineConfig) -> Optional[RoiSpec]:
    if config.roi_width is None:
        return None
    return RoiSpec(config.roi_x, config.roi_y, config.roi_width, config.roi_height)


def _frames(source: FrameSource, roi: Optional[RoiSpec]):
    for frame in source:
        if roi is None:
            yield frame
            continue
        try:
            yield apply_roi(frame, roi)
        except ValueError as exc:
            raise FrameError(frame.index, exc) from exc


def process_video(config: PipelineConfig, source: FrameSource, out=None, trace=None) -> DetectionSeries:
    """Fold ``process_frame`` over ``source``, writing the detection CSV to ``out`` as it goes.

    On failure the rows written so far are kept and a ``# truncated`` line
    is appended before the error propagates.
    """
    roi = roi_of(config)
    ctx = DetectionContext(config, trace)
    records: list[RainDecision] = []
    fh = open(out, "w") if out is not None else None
    try:
        if fh:
            fh.write(
                f"# pluvio detections config_hash={config.fingerprint()} source={Path(source.path).name} "
                f"frame_rate={source.frame_rate:g} mode={config.decision_mode}\n"
            )
            fh.write(CSV_HEADER + "\n")

        def emit(rec):
            records.append(rec)
            if fh:
                fh.write(format_record(rec) + "\n")

        frames = _frames(source, roi)
        try:
            if config.candidate_method == "photometric":
                pending = next(frames, None)
                while pending is not None:
                    nxt = next(frames, None)
                    emit(process_frame(ctx, pending, nxt))
                    pending = nxt
            else:
                for frame in frames:
                    emit(process_frame(ctx, frame))
        except Exception as exc:
            if fh:
                fh.write(f"# truncated after {len(records)} frames: {exc}\n")
            raise
    finally:
        if fh:
            fh.close()
    log.info("processed %d frames from %s", len(records), source.path)
    return DetectionSeries(records, config.fingerprint())
