"""Connected components of candidate masks and their orientation geometry.

Coordinates: ``x`` is the column index, ``y`` the row index. Orientation
follows the two-argument form of ``theta = 0.5 * atan(2 m11 / (m02 - m20))``
folded into [0, 180): a blob elongated along the image rows (vertical streak)
has theta = 0, one elongated along the columns has theta = 90, and a segment
running in direction (dx, dy) = (sin t, cos t) has theta = t.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from pluvio.errors import IsotropicBlobError

_STRUCTURE = {
    4: ndimage.generate_binary_structure(2, 1),
    8: ndimage.generate_binary_structure(2, 2),
}


@dataclass(frozen=True, eq=False)
class Blob:
    xs: np.ndarray
    ys: np.ndarray

    @property
    def area(self) -> int:
        return len(self.xs)

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """(x_min, y_min, x_max, y_max), inclusive."""
        return int(self.xs.min()), int(self.ys.min()), int(self.xs.max()), int(self.ys.max())


@dataclass(frozen=True)
class MomentSet:
    m20: float
    m11: float
    m02: float


@dataclass(frozen=True)
class StreakStats:
    theta: float
    dtheta: float
    weight: float


def label_mask(mask, connectivity: int = 8) -> tuple[np.ndarray, int]:
    if connectivity not in _STRUCTURE:
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(np.asarray(mask, dtype=bool), structure=_STRUCTURE[connectivity])
    return labels, n


def _grouped(labels: np.ndarray):
    ys, xs = np.nonzero(labels)
    ids = labels[ys, xs]
    order = np.argsort(ids, kind="stable")
    ids, xs, ys = ids[order], xs[order].astype(np.int64), ys[order].astype(np.int64)
    starts = np.flatnonzero(np.r_[True, ids[1:] != ids[:-1]]) if len(ids) else np.array([], dtype=np.int64)
    return xs, ys, starts


def connected_components(mask, connectivity: int = 8) -> list[Blob]:
    """Maximal connected regions of ``mask``, in raster order of first pixel."""
    labels, n = label_mask(mask, connectivity)
    if n == 0:
        return []
    xs, ys, starts = _grouped(labels)
    return [Blob(bx, by) for bx, by in zip(np.split(xs, starts[1:]), np.split(ys, starts[1:]))]


def filter_by_size(blobs, min_size: int, max_size: int) -> list[Blob]:
    if min_size > max_size:
        raise ValueError(f"min_size {min_size} > max_size {max_size}")
    return [b for b in blobs if min_size <= b.area <= max_size]


def _moments_from_sums(n, sx, sy, sxx, syy, sxy):
    # n*sum(x^2) - sum(x)^2 is an exact integer; one division then rounds once
    n_f = n.astype(np.float64)
    m20 = (n * sxx - sx * sx).astype(np.float64) / n_f
    m02 = (n * syy - sy * sy).astype(np.float64) / n_f
    m11 = (n * sxy - sx * sy).astype(np.float64) / n_f
    return m20, m11, m02


def central_moments(blob: Blob) -> MomentSet:
    """Raw (not area-normalised) central second-order moments."""
    if blob.area < 1:
        raise ValueError("empty blob")
    x = blob.xs.astype(np.int64)
    y = blob.ys.astype(np.int64)
    sums = [np.array([v]) for v in (len(x), x.sum(), y.sum(), (x * x).sum(), (y * y).sum(), (x * y).sum())]
    m20, m11, m02 = _moments_from_sums(*sums)
    return MomentSet(float(m20[0]), float(m11[0]), float(m02[0]))


@dataclass(frozen=True, eq=False)
class BlobTable:
    """Area and moments of every blob in one mask, as parallel arrays."""

    area: np.ndarray
    m20: np.ndarray
    m11: np.ndarray
    m02: np.ndarray

    def __len__(self):
        return len(self.area)

    def select(self, min_size: int, max_size: int) -> "BlobTable":
        keep = (self.area >= min_size) & (self.area <= max_size)
        return BlobTable(self.area[keep], self.m20[keep], self.m11[keep], self.m02[keep])


def measure_blobs(mask, connectivity: int = 8) -> BlobTable:
    """Label ``mask`` and compute every blob's moments without building Blob objects."""
    labels, n = label_mask(mask, connectivity)
    if n == 0:
        empty = np.zeros(0)
        return BlobTable(np.zeros(0, dtype=np.int64), empty, empty, empty)
    xs, ys, starts = _grouped(labels)
    red = lambda v: np.add.reduceat(v, starts)  # noqa: E731
    area = np.diff(np.r_[starts, len(xs)])
    m20, m11, m02 = _moments_from_sums(area, red(xs), red(ys), red(xs * xs), red(ys * ys), red(xs * ys))
    return BlobTable(area, m20, m11, m02)


def geometry_arrays(m20, m11, m02, dm: float):
    """Vectorised orientation, uncertainty and weight.

    Returns (theta, dtheta, weight, isotropic). Entries flagged isotropic
    (m20 == m02 and m11 == 0) hold NaN in theta and dtheta.
    """
    m20, m11, m02 = (np.asarray(v, dtype=np.float64) for v in (m20, m11, m02))
    diff = m02 - m20
    denom = diff * diff + 4.0 * m11 * m11
    isotropic = denom == 0
    theta = np.mod(0.5 * np.degrees(np.arctan2(2.0 * m11, diff)), 180.0)
    theta = np.where(theta >= 180.0, 0.0, theta)
    with np.errstate(divide="ignore", invalid="ignore"):
        dtheta = np.sqrt(diff * diff + 2.0 * m11 * m11) / denom * dm
    theta = np.where(isotropic, np.nan, theta)
    dtheta = np.where(isotropic, np.nan, dtheta)
    half_sum = 0.5 * (m20 + m02)
    lam1 = half_sum + np.sqrt(0.25 * (m20 - m02) ** 2 + m11 * m11)
    weight = np.sqrt(np.maximum(lam1, 0.0))
    return theta, dtheta, weight, isotropic


def streak_geometry(m: MomentSet, dm: float) -> StreakStats:
    if dm <= 0:
        raise ValueError(f"dm must be > 0, got {dm}")
    theta, dtheta, weight, iso = geometry_arrays([m.m20], [m.m11], [m.m02], dm)
    if iso[0]:
        raise IsotropicBlobError(f"isotropic blob {m}: orientation undefined")
    return StreakStats(float(theta[0]), float(dtheta[0]), float(weight[0]))


def table_streaks(table: BlobTable, dm: float):
    """Orientation arrays for every non-isotropic blob in ``table``."""
    theta, dtheta, weight, iso = geometry_arrays(table.m20, table.m11, table.m02, dm)
    keep = ~iso
    return theta[keep], dtheta[keep], weight[keep]
