"""Synthetic surveillance sequences with controllable rain and exact ground truth.

Streak orientations follow the convention of :mod:`pluvio.streaks`: a streak
of orientation ``t`` degrees runs along (dx, dy) = (sin t, cos t), so 0 is
vertical and 90 horizontal.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, fields
from functools import lru_cache
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from pluvio.config import coerce
from pluvio.errors import ConfigError
from pluvio.ingest import Frame, FrameSource, open_frame_source, write_y8

BACKGROUNDS = ("constant", "textured-static", "textured-with-noise")


@dataclass(frozen=True)
class SceneSpec:
    width: int = 320
    height: int = 240
    background: str = "constant"
    intensity: float = 100.0
    noise_std: float = 0.0
    texture_amplitude: float = 30.0
    frame_rate: float = 30.0
    frames: int = 900

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.frames <= 0:
            raise ValueError("scene dimensions and duration must be positive")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.background not in BACKGROUNDS:
            raise ValueError(f"background must be one of {BACKGROUNDS}")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be > 0")


@dataclass(frozen=True)
class RainSpec:
    streaks_per_frame: float = 60.0
    orientation_mean: float = 85.0
    orientation_std: float = 4.0
    length_min: int = 8
    length_max: int = 20
    width: int = 1
    boost: float = 40.0
    clutter_fraction: float = 0.1
    # half-open frame intervals with rain; None means every frame
    intervals: Optional[tuple] = None
    # uniform-orientation streaks per frame outside the rain intervals
    dry_clutter_per_frame: float = 0.0

    def __post_init__(self):
        if self.streaks_per_frame < 0 or self.dry_clutter_per_frame < 0:
            raise ValueError("streak rates must be >= 0")
        if not 0 <= self.clutter_fraction <= 1:
            raise ValueError("clutter_fraction must lie in [0, 1]")
        if self.orientation_std < 0:
            raise ValueError("orientation_std must be >= 0")
        if not 1 <= self.length_min <= self.length_max:
            raise ValueError("need 1 <= length_min <= length_max")
        if self.width < 1:
            raise ValueError("width must be >= 1")

    def raining(self, t: int) -> bool:
        if self.streaks_per_frame <= 0:
            return False
        if self.intervals is None:
            return True
        return any(a <= t < b for a, b in self.intervals)


@dataclass(frozen=True)
class StreakPlacement:
    x: float
    y: float
    theta: float
    length: int
    width: int
    boost: float
    clutter: bool = False


@dataclass(frozen=True, eq=False)
class GroundTruth:
    rain: np.ndarray
    orientations: tuple

    def __len__(self):
        return len(self.rain)


def _rng(seed, *stream) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng([int(seed), *stream])


def sample_streaks(rain: RainSpec, width: int, height: int, seed, raining: bool = True) -> list[StreakPlacement]:
    """Draw one frame's streaks.

    While raining the count is Poisson(streaks_per_frame) and each
    orientation comes from N(mean, std) with probability 1 - clutter_fraction,
    else uniform on [0, 179]. Outside rain only uniform clutter is drawn, at
    rate ``dry_clutter_per_frame``.
    """
    rng = _rng(seed)
    mean = rain.streaks_per_frame if raining else rain.dry_clutter_per_frame
    n = int(rng.poisson(mean)) if mean > 0 else 0
    if n == 0:
        return []
    if raining:
        clutter = rng.random(n) < rain.clutter_fraction
    else:
        clutter = np.ones(n, dtype=bool)
    gauss = np.mod(rng.normal(rain.orientation_mean, rain.orientation_std, n), 180.0)
    uniform = rng.uniform(0.0, 179.0, n)
    theta = np.where(clutter, uniform, gauss)
    xs = rng.uniform(0, width, n)
    ys = rng.uniform(0, height, n)
    lengths = rng.integers(rain.length_min, rain.length_max + 1, n)
    return [
        StreakPlacement(float(x), float(y), float(t), int(ln), rain.width, rain.boost, bool(c))
        for x, y, t, ln, c in zip(xs, ys, theta, lengths, clutter)
    ]


def rasterize_segment(x0: float, y0: float, x1: float, y1: float) -> tuple[np.ndarray, np.ndarray]:
    """Pixels of the segment from (x0, y0) to (x1, y1), one per step of the major axis.

    The minor coordinate is the exact line value rounded to the nearest
    pixel, so the pixel set keeps the slope of the real-valued segment
    (rounding the endpoints first would tilt short streaks by a degree or
    more). No anti-aliasing; output is fully determined by the inputs.
    """
    dx, dy = x1 - x0, y1 - y0
    if abs(dx) >= abs(dy):
        if dx == 0:
            return np.array([int(round(x0))]), np.array([int(round(y0))])
        a, b = sorted((int(round(x0)), int(round(x1))))
        xs = np.arange(a, b + 1)
        ys = np.rint(y0 + (xs - x0) * (dy / dx)).astype(np.int64)
        return xs, ys
    a, b = sorted((int(round(y0)), int(round(y1))))
    ys = np.arange(a, b + 1)
    xs = np.rint(x0 + (ys - y0) * (dx / dy)).astype(np.int64)
    return xs, ys


def streak_pixels(s: StreakPlacement, width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixel coordinates covered by a streak, clipped to the frame."""
    t = math.radians(s.theta)
    half = (s.length - 1) / 2.0
    dx, dy = math.sin(t) * half, math.cos(t) * half
    xs, ys = rasterize_segment(s.x - dx, s.y - dy, s.x + dx, s.y + dy)
    if s.width > 1:
        offsets = np.arange(-((s.width - 1) // 2), s.width // 2 + 1)
        if abs(dx) >= abs(dy):
            ys = (ys[None, :] + offsets[:, None]).ravel()
            xs = np.tile(xs, len(offsets))
        else:
            xs = (xs[None, :] + offsets[:, None]).ravel()
            ys = np.tile(ys, len(offsets))
    keep = (xs >= 0) & (xs < width) & (ys >= 0) & (ys < height)
    return xs[keep], ys[keep]


@lru_cache(maxsize=8)
def _texture(width: int, height: int, amplitude: float, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, 7919])
    field = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma=6.0)
    field /= max(float(np.abs(field).max()), 1e-12)
    field = amplitude * field
    field.setflags(write=False)
    return field


def background_image(scene: SceneSpec, t: int, seed: int) -> np.ndarray:
    img = np.full((scene.height, scene.width), float(scene.intensity))
    if scene.background != "constant":
        img = img + _texture(scene.width, scene.height, float(scene.texture_amplitude), int(seed))
    if scene.noise_std > 0 and scene.background != "textured-static":
        img = img + _rng(seed, t, 1).normal(0.0, scene.noise_std, img.shape)
    return img


def render_frame(scene: SceneSpec, streaks, t: int, seed: int) -> Frame:
    """Render frame ``t``: background, then every streak pixel raised by its boost.

    Overlapping streaks raise a pixel once, by the larger boost. Values are
    rounded and clamped to [0, 255].
    """
    img = background_image(scene, t, seed)
    boost = np.zeros(img.shape)
    for s in streaks:
        xs, ys = streak_pixels(s, scene.width, scene.height)
        boost[ys, xs] = np.maximum(boost[ys, xs], s.boost)
    return Frame(t, np.clip(np.rint(img + boost), 0, 255).astype(np.uint8))


def frame_streaks(rain: RainSpec, scene: SceneSpec, t: int, seed: int) -> list[StreakPlacement]:
    return sample_streaks(rain, scene.width, scene.height, _rng(seed, t, 0), rain.raining(t))


def render_sequence(scene: SceneSpec, rain: RainSpec, seed: int):
    """Yield (frame, streaks) for every frame of the sequence."""
    for t in range(scene.frames):
        streaks = frame_streaks(rain, scene, t, seed)
        yield render_frame(scene, streaks, t, seed), streaks


def generate_sequence(
    scene: SceneSpec, rain: RainSpec, seed: int, out_dir, name: str = "synthetic"
) -> tuple[FrameSource, GroundTruth]:
    """Write ``<name>.y8``/``.meta`` and ``<name>_labels.csv`` under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    flags, orientations = [], []

    def frames():
        for frame, streaks in render_sequence(scene, rain, seed):
            flags.append(rain.raining(frame.index))
            orientations.append(np.array([s.theta for s in streaks]))
            yield frame.pixels

    path = write_y8(out_dir / f"{name}.y8", frames(), scene.frame_rate)
    truth = GroundTruth(np.array(flags, dtype=bool), tuple(orientations))
    write_frame_labels(out_dir / f"{name}_labels.csv", truth.rain)
    return open_frame_source(path), truth


def write_frame_labels(path, rain_flags) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame", "rain"])
        for i, r in enumerate(rain_flags):
            w.writerow([i, int(bool(r))])


def _parse_intervals(raw: str) -> Optional[tuple]:
    raw = raw.strip()
    if raw.lower() in ("", "all", "none"):
        return None
    out = []
    for part in raw.split(","):
        a, sep, b = part.partition(":")
        if not sep:
            raise ConfigError(f"rain.intervals: expected start:stop, got {part!r}")
        out.append((int(a), int(b)))
    return tuple(out)


def _from_mapping(cls, raw: dict, prefix: str, special=None):
    types = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        section, _, name = key.partition(".")
        if section != prefix or name not in types:
            raise ConfigError(f"unknown {prefix} spec key {key!r}")
        if special and name in special:
            kwargs[name] = special[name](value)
        else:
            kwargs[name] = coerce(value, types[name], key)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"{prefix} spec: {exc}") from exc


def scene_from_mapping(raw: dict) -> SceneSpec:
    raw = dict(raw)
    seconds = raw.pop("scene.seconds", None)
    if seconds is not None:
        if "scene.frames" in raw:
            raise ConfigError("give scene.frames or scene.seconds, not both")
        rate = float(raw.get("scene.frame_rate", SceneSpec.frame_rate))
        raw["scene.frames"] = str(round(float(seconds) * rate))
    return _from_mapping(SceneSpec, raw, "scene")


def rain_from_mapping(raw: dict) -> RainSpec:
    return _from_mapping(RainSpec, raw, "rain", {"intervals": _parse_intervals})
