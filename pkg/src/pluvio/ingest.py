"""Frame sources: image-sequence directories and raw ``.y8`` files.

A raw sequence is a pair ``<name>.y8`` (row-major 8-bit frames concatenated)
and ``<name>.meta`` (``width=``, ``height=``, ``frame_rate=`` lines).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional

import numpy as np
from PIL import Image

from pluvio.errors import DataError, FrameDecodeError

IMAGE_SUFFIXES = {".png", ".bmp", ".pgm", ".ppm", ".tif", ".tiff", ".jpg", ".jpeg"}

# ITU-R BT.601 luma weights
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True, eq=False)
class Frame:
    index: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.pixels.ndim != 2 or self.pixels.shape[0] == 0 or self.pixels.shape[1] == 0:
            raise ValueError(f"frame {self.index}: expected a non-empty 2-D array, got shape {self.pixels.shape}")

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]


@dataclass(frozen=True)
class RoiSpec:
    x: int
    y: int
    width: int
    height: int

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"roi size must be positive, got {self.width}x{self.height}")
        if self.x < 0 or self.y < 0:
            raise ValueError("roi offset must be non-negative")


def apply_roi(frame: Frame, roi: RoiSpec) -> Frame:
    """Crop ``frame`` so output pixel (i, j) is input pixel (y+i, x+j)."""
    if roi.x + roi.width > frame.width or roi.y + roi.height > frame.height:
        raise ValueError(
            f"roi {roi.width}x{roi.height}+{roi.x}+{roi.y} exceeds frame {frame.width}x{frame.height}"
        )
    crop = frame.pixels[roi.y : roi.y + roi.height, roi.x : roi.x + roi.width]
    return Frame(frame.index, crop)


def to_grayscale(rgb: np.ndarray, channel: str = "gray") -> np.ndarray:
    """Reduce an (H, W, 3) RGB array to uint8 intensity.

    ``channel="gray"`` applies the BT.601 weights and rounds to nearest, so
    (255, 0, 0) maps to round(76.245) = 76. ``"r"``, ``"g"``, ``"b"`` pick a
    single channel unchanged.
    """
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) array, got shape {rgb.shape}")
    if channel in ("r", "g", "b"):
        return np.ascontiguousarray(rgb[..., "rgb".index(channel)]).astype(np.uint8)
    if channel != "gray":
        raise ValueError(f"unknown channel {channel!r}")
    luma = rgb.astype(np.float64) @ np.array(LUMA_WEIGHTS)
    return np.clip(np.rint(luma), 0, 255).astype(np.uint8)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass
class FrameSource:
    """Sequential, single-consumer iterator over the frames at ``path``.

    ``next_frame`` returns ``None`` at end of stream, and keeps returning
    ``None`` on further calls.
    """

    path: Path
    frame_rate: float
    frame_count: int
    width: int
    height: int
    channel: str = "gray"
    _files: list = field(default_factory=list, repr=False)
    _cursor: int = field(default=0, repr=False)

    @property
    def duration(self) -> float:
        """Nominal duration in seconds."""
        return self.frame_count / self.frame_rate

    def rewind(self) -> None:
        self._cursor = 0

    def next_frame(self) -> Optional[Frame]:
        if self._cursor >= self.frame_count:
            return None
        index = self._cursor
        pixels = self._read(index)
        self._cursor += 1
        return Frame(index, _frozen(pixels))

    def __iter__(self) -> Iterator[Frame]:
        while (frame := self.next_frame()) is not None:
            yield frame

    def _read(self, index: int) -> np.ndarray:
        if self._files:
            return _read_image(self._files[index], index, self.channel)
        size = self.width * self.height
        with open(self.path, "rb") as fh:
            fh.seek(index * size)
            buf = fh.read(size)
        if len(buf) != size:
            raise FrameDecodeError(index, f"expected {size} bytes, got {len(buf)}")
        return np.frombuffer(buf, dtype=np.uint8).reshape(self.height, self.width).copy()


def _read_image(path: Path, index: int, channel: str) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("L", "1", "I;16", "I", "F"):
                arr = np.asarray(img.convert("L"))
            else:
                arr = to_grayscale(np.asarray(img.convert("RGB")), channel)
    except (OSError, SyntaxError, ValueError) as exc:
        raise FrameDecodeError(index, f"{path.name}: {exc}") from exc
    return np.array(arr, dtype=np.uint8)


def read_meta(path) -> dict[str, float]:
    meta = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read sidecar {path}: {exc}") from exc
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"{path}: malformed line {line!r}")
        try:
            meta[key.strip()] = float(value)
        except ValueError:
            raise DataError(f"{path}: {key.strip()} is not a number: {value.strip()!r}") from None
    for key in ("width", "height", "frame_rate"):
        if key not in meta:
            raise DataError(f"{path}: missing {key}=")
    return meta


def open_frame_source(path, frame_rate: Optional[float] = None, channel: str = "gray") -> FrameSource:
    """Open a directory of images or a ``.y8``/``.meta`` pair.

    ``frame_rate`` overrides the sidecar value; image directories carry no
    timing, so it is required there.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such input: {path}")
    if path.is_dir():
        files = sorted(p for p in path.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not files:
            raise DataError(f"{path}: no frames")
        if frame_rate is None:
            raise DataError(f"{path}: frame rate must be supplied for image sequences")
        first = _read_image(files[0], 0, channel)
        src = FrameSource(path, float(frame_rate), len(files), first.shape[1], first.shape[0], channel, files)
    elif path.suffix == ".y8":
        meta = read_meta(path.with_suffix(".meta"))
        width, height = int(meta["width"]), int(meta["height"])
        if width <= 0 or height <= 0:
            raise DataError(f"{path}: bad frame size {width}x{height}")
        size = path.stat().st_size
        count, rest = divmod(size, width * height)
        if rest:
            raise FrameDecodeError(count, f"{path.name} ends with a truncated frame ({rest} stray bytes)")
        if count == 0:
            raise DataError(f"{path}: no frames")
        rate = float(frame_rate if frame_rate is not None else meta["frame_rate"])
        src = FrameSource(path, rate, count, width, height, channel)
    else:
        raise DataError(f"unsupported input {path} (expected an image directory or a .y8 file)")
    if src.frame_rate <= 0:
        raise DataError(f"frame rate must be > 0, got {src.frame_rate}")
    return src


def next_frame(source: FrameSource) -> Optional[Frame]:
    return source.next_frame()


def write_y8(path, frames, frame_rate: float) -> Path:
    """Write uint8 frames (iterable of 2-D arrays) as ``.y8`` plus ``.meta``."""
    path = Path(path).with_suffix(".y8")
    shape = None
    with open(path, "wb") as fh:
        for pixels in frames:
            pixels = np.asarray(pixels)
            if shape is None:
                shape = pixels.shape
            elif pixels.shape != shape:
                raise ValueError(f"frame shape {pixels.shape} differs from {shape}")
            fh.write(np.ascontiguousarray(pixels, dtype=np.uint8).tobytes())
    if shape is None:
        raise ValueError("no frames to write")
    path.with_suffix(".meta").write_text(f"width={shape[1]}\nheight={shape[0]}\nframe_rate={frame_rate:g}\n")
    return path
