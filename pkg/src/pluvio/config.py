"""Flat ``section.key = value`` configuration files.

The same syntax backs pipeline configs, synthetic scene/rain specs and grid
files. Lines starting with ``#`` are comments; unknown keys are rejected.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from pluvio.errors import ConfigError


def parse_kv(text: str, source: str = "<string>") -> dict[str, str]:
    """Split config text into a ``{key: raw_value}`` dict, keeping order."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def read_kv(path) -> dict[str, str]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_kv(text, str(path))


def coerce(raw: str, kind, key: str):
    """Convert a raw string to ``kind`` (int, float, str, or Optional[int])."""
    if kind in ("Optional[int]", Optional[int]):
        if raw.lower() in ("", "none"):
            return None
        kind = int
    try:
        if kind in (int, "int"):
            return int(raw)
        if kind in (float, "float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {getattr(kind, '__name__', kind)}") from None
    return raw


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the detection loop.

    Defaults are the selected column of the published parameter search
    (c=3, blob sizes 4..200, dm=0.5, 100 EM iterations, D_c=0.19,
    pi_rain=0.40, 500 warm-up frames) plus conventional adaptive mixture-of-Gaussians
    values for the background model.
    """

    mog_k: int = 3
    mog_learning_rate: float = 0.01
    mog_background_ratio: float = 0.7
    mog_init_variance: float = 225.0
    mog_min_variance: float = 4.0
    mog_warmup_frames: int = 500
    candidate_method: str = "mog"
    candidate_c: float = 3.0
    blob_min_size: int = 4
    blob_max_size: int = 200
    blob_connectivity: int = 8
    streak_dm: float = 0.5
    hos_min_dtheta: float = 0.5
    em_max_iterations: int = 100
    em_tolerance: float = 1e-4
    ks_d_c: float = 0.19
    kalman_q_var: float = 0.01
    kalman_r_var: float = 0.1
    decision_pi_rain: float = 0.40
    decision_mode: str = "kalman"
    roi_x: int = 0
    roi_y: int = 0
    roi_width: Optional[int] = None
    roi_height: Optional[int] = None
    input_frame_rate: Optional[float] = None
    input_channel: str = "gray"
    eval_count_no_evidence_as: str = "exclude"

    def __post_init__(self):
        self.validate()

    @staticmethod
    def key_of(attr: str) -> str:
        section, _, rest = attr.partition("_")
        return f"{section}.{rest}"

    @classmethod
    def attr_of(cls, key: str) -> str:
        attr = key.replace(".", "_", 1)
        if "." not in key or attr not in {f.name for f in fields(cls)}:
            raise ConfigError(f"unknown config key {key!r}")
        return attr

    @classmethod
    def from_mapping(cls, raw: dict[str, str]) -> "PipelineConfig":
        types = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, value in raw.items():
            attr = cls.attr_of(key)
            kind = types[attr]
            if kind == "Optional[float]":
                kwargs[attr] = None if value.lower() in ("", "none") else coerce(value, float, key)
            else:
                kwargs[attr] = coerce(value, kind, key)
        return cls(**kwargs)

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.mog_k >= 2, "mog.k must be >= 2")
        need(0 < self.mog_learning_rate < 1, "mog.learning_rate must lie in (0, 1)")
        need(0 < self.mog_background_ratio < 1, "mog.background_ratio must lie in (0, 1)")
        need(self.mog_init_variance > 0, "mog.init_variance must be > 0")
        need(self.mog_min_variance > 0, "mog.min_variance must be > 0")
        need(self.mog_warmup_frames >= 0, "mog.warmup_frames must be >= 0")
        need(self.candidate_method in ("mog", "photometric"), "candidate.method must be mog or photometric")
        need(self.candidate_c > 0, "candidate.c must be > 0")
        need(1 <= self.blob_min_size <= self.blob_max_size, "need 1 <= blob.min_size <= blob.max_size")
        need(self.blob_connectivity in (4, 8), "blob.connectivity must be 4 or 8")
        need(self.streak_dm > 0, "streak.dm must be > 0")
        need(self.hos_min_dtheta >= 0, "hos.min_dtheta must be >= 0")
        need(self.em_max_iterations >= 1, "em.max_iterations must be >= 1")
        need(self.em_tolerance >= 0, "em.tolerance must be >= 0")
        need(0 <= self.ks_d_c <= 1, "ks.d_c must lie in [0, 1]")
        need(self.kalman_q_var > 0 and self.kalman_r_var > 0, "kalman variances must be > 0")
        need(0 <= self.decision_pi_rain <= 1, "decision.pi_rain must lie in [0, 1]")
        need(self.decision_mode in ("em", "kalman"), "decision.mode must be em or kalman")
        need(self.roi_x >= 0 and self.roi_y >= 0, "roi offsets must be >= 0")
        need((self.roi_width is None) == (self.roi_height is None), "roi.width and roi.height go together")
        if self.roi_width is not None:
            need(self.roi_width > 0 and self.roi_height > 0, "roi size must be positive")
        need(self.input_frame_rate is None or self.input_frame_rate > 0, "input.frame_rate must be > 0")
        need(self.input_channel in ("gray", "r", "g", "b"), "input.channel must be gray, r, g or b")
        need(
            self.eval_count_no_evidence_as in ("exclude", "no-rain"),
            "eval.count_no_evidence_as must be exclude or no-rain",
        )

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            lines.append(f"{self.key_of(f.name)} = {'none' if value is None else value!r}".replace("'", ""))
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def load_config(path) -> PipelineConfig:
    return PipelineConfig.from_mapping(read_kv(path))
