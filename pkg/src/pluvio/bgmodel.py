"""Per-pixel Mixture-of-Gaussians background model and candidate masks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pluvio.ingest import Frame

MATCH_SIGMAS = 2.5


@dataclass(frozen=True, eq=False)
class CandidateMask:
    index: int
    mask: np.ndarray  # bool, same shape as the frame

    @property
    def count(self) -> int:
        return int(self.mask.sum())


class MoGModel:
    """Adaptive mixture-of-Gaussians background model over intensity frames.

    Modes live in arrays of shape (K, H, W). Each update ranks the modes of a
    pixel by weight / sigma, declares the leading modes whose cumulative
    weight stays within ``background_ratio`` as background, and matches the
    new intensity against the first mode within 2.5 sigma.
    """

    def __init__(
        self,
        k: int = 3,
        learning_rate: float = 0.01,
        background_ratio: float = 0.7,
        warm_up: int = 500,
        init_variance: float = 225.0,
        min_variance: float = 4.0,
    ):
        if k < 2:
            raise ValueError(f"need at least 2 modes, got k={k}")
        if not 0 < learning_rate < 1:
            raise ValueError(f"learning_rate must lie in (0, 1), got {learning_rate}")
        if not 0 < background_ratio < 1:
            raise ValueError(f"background_ratio must lie in (0, 1), got {background_ratio}")
        if warm_up < 0:
            raise ValueError(f"warm_up must be >= 0, got {warm_up}")
        if init_variance <= 0 or min_variance <= 0:
            raise ValueError("variances must be positive")
        self.k = k
        self.learning_rate = learning_rate
        self.background_ratio = background_ratio
        self.warm_up = warm_up
        self.init_variance = float(init_variance)
        self.min_variance = float(min_variance)
        self.frames_seen = 0
        self.mean = self.var = self.weight = None

    @property
    def shape(self):
        return None if self.mean is None else self.mean.shape[1:]

    def is_warm_up(self, index: int) -> bool:
        return index < self.warm_up

    def _start(self, x):
        self.mean = np.zeros((self.k, *x.shape))
        self.mean[0] = x
        self.var = np.full((self.k, *x.shape), self.init_variance)
        self.weight = np.zeros((self.k, *x.shape))
        self.weight[0] = 1.0

    def _rank_key(self):
        return self.weight / np.sqrt(self.var)

    def _background_modes(self, key):
        # mode j is background if the modes ranked above it hold <= background_ratio weight;
        # ties in key rank the lower index first
        above = np.zeros_like(self.weight)
        for j in range(self.k):
            for i in range(self.k):
                if i == j:
                    continue
                outranks = key[i] > key[j] if i > j else key[i] >= key[j]
                above[j] += np.where(outranks, self.weight[i], 0.0)
        return above <= self.background_ratio

    def update(self, frame: Frame) -> tuple[Frame, Frame]:
        """Consume one frame; return (foreground, background) images.

        Foreground holds the frame intensity where no background mode
        matched and 0 elsewhere. Background is the mean of the top-ranked
        mode after the update.
        """
        x = np.asarray(frame.pixels, dtype=np.float64)
        if self.mean is None:
            self._start(x)
        elif x.shape != self.shape:
            raise ValueError(f"frame {frame.index}: shape {x.shape} does not match model {self.shape}")

        alpha = self.learning_rate
        key = self._rank_key()
        is_bg = self._background_modes(key)
        hits = (np.abs(x - self.mean) < MATCH_SIGMAS * np.sqrt(self.var)) & (self.weight > 0)
        matched = hits.any(axis=0)
        # best-ranked matching mode
        first = np.argmax(np.where(hits, key, -1.0), axis=0)
        modes = np.arange(self.k)[:, None, None]
        onehot = (modes == first) & matched
        foreground = ~(onehot & is_bg).any(axis=0)

        self.weight = (1 - alpha) * self.weight + alpha * onehot
        mean_new = self.mean + alpha * (x - self.mean)
        var_new = (1 - alpha) * self.var + alpha * (x - mean_new) ** 2
        self.mean = np.where(onehot, mean_new, self.mean)
        self.var = np.maximum(np.where(onehot, var_new, self.var), self.min_variance)

        # unmatched pixels replace their least probable mode
        fresh = ~matched
        if fresh.any():
            slot = (modes == np.argmin(key, axis=0)) & fresh
            self.mean = np.where(slot, x, self.mean)
            self.var = np.where(slot, self.init_variance, self.var)
            self.weight = np.where(slot, alpha, self.weight)
        self.weight /= self.weight.sum(axis=0)
        self.frames_seen += 1

        top = np.argmax(self._rank_key(), axis=0)
        background = np.take_along_axis(self.mean, top[None], 0)[0]
        fg_pixels = np.where(foreground, x, 0.0)
        return Frame(frame.index, fg_pixels), Frame(frame.index, background)


def mog_init(
    k: int = 3,
    learning_rate: float = 0.01,
    background_ratio: float = 0.7,
    warm_up: int = 500,
    **kwargs,
) -> MoGModel:
    return MoGModel(k, learning_rate, background_ratio, warm_up, **kwargs)


def mog_update(model: MoGModel, frame: Frame) -> tuple[Frame, Frame]:
    return model.update(frame)


def _check_same(*arrays):
    shape = arrays[0].shape
    for a in arrays[1:]:
        if a.shape != shape:
            raise ValueError(f"dimension mismatch: {a.shape} vs {shape}")


def extract_candidates(foreground: Frame, background: Frame, c: float) -> CandidateMask:
    """Mark foreground-active pixels with ``fg - bg >= c``."""
    if c <= 0:
        raise ValueError(f"threshold c must be > 0, got {c}")
    fg = np.asarray(foreground.pixels, dtype=np.float64)
    bg = np.asarray(background.pixels, dtype=np.float64)
    _check_same(fg, bg)
    mask = (fg > 0) & (fg - bg >= c)
    return CandidateMask(foreground.index, mask)


def photometric_candidates(prev: Frame, cur: Frame, nxt: Frame, c: float) -> CandidateMask:
    """Pixels brighter than both temporal neighbours by at least ``c``."""
    if c <= 0:
        raise ValueError(f"threshold c must be > 0, got {c}")
    p, x, n = (np.asarray(f.pixels, dtype=np.int32) for f in (prev, cur, nxt))
    _check_same(p, x, n)
    return CandidateMask(cur.index, (x - p >= c) & (x - n >= c))
