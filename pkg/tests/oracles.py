"""Reference implementations used as test oracles.

Each one is written from the definition, deliberately naive and without
importing the code it checks.
"""

from __future__ import annotations

import math
from collections import deque
from fractions import Fraction


def flood_fill_labels(mask, connectivity=8):
    """Label components by breadth-first flood fill in raster order.

    Returns a list of pixel sets, ordered by each component's first pixel
    in raster order.
    """
    h, w = len(mask), len(mask[0])
    if connectivity == 8:
        steps = [(dy, dx) for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)]
    else:
        steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    seen = [[False] * w for _ in range(h)]
    comps = []
    for y in range(h):
        for x in range(w):
            if not mask[y][x] or seen[y][x]:
                continue
            comp = set()
            queue = deque([(y, x)])
            seen[y][x] = True
            while queue:
                cy, cx = queue.popleft()
                comp.add((cx, cy))
                for dy, dx in steps:
                    ny, nx = cy + dy, cx + dx
                    if 0 <= ny < h and 0 <= nx < w and mask[ny][nx] and not seen[ny][nx]:
                        seen[ny][nx] = True
                        queue.append((ny, nx))
            comps.append(comp)
    return comps


def moments_double_sum(pixels):
    """Central second moments as exact rationals from the definition.

    ``pixels`` is an iterable of (x, y). Means are exact fractions and each
    squared deviation is summed without rounding; the result is rounded once.
    """
    pts = list(pixels)
    n = len(pts)
    xbar = Fraction(sum(x for x, _ in pts), n)
    ybar = Fraction(sum(y for _, y in pts), n)
    m20 = sum((x - xbar) ** 2 for x, _ in pts)
    m02 = sum((y - ybar) ** 2 for _, y in pts)
    m11 = sum((x - xbar) * (y - ybar) for x, y in pts)
    return float(m20), float(m11), float(m02)


def ks_exhaustive(bins, mu, sigma):
    """Largest |F_n(b) - F(b)| found by visiting every bin one at a time.

    F is the normal CDF restricted to [-0.5, 179.5] and read at b + 0.5;
    F_n is the running sum of the histogram divided by its total.
    """
    def phi(v):
        return 0.5 * math.erfc(-(v - mu) / (sigma * math.sqrt(2.0)))

    lo, hi = phi(-0.5), phi(179.5)
    total = float(sum(bins))
    best = 0.0
    running = 0.0
    for b in range(180):
        running += bins[b]
        fn = 1.0 if b == 179 else running / total
        f = (phi(b + 0.5) - lo) / (hi - lo)
        best = max(best, abs(fn - f))
    return best


def count_confusion(pred, truth, no_evidence_as="exclude"):
    """Tally TP/TN/FP/FN with explicit branches, frame by frame."""
    tp = tn = fp = fn = 0
    for p, t in zip(pred, truth):
        if p == "W":
            continue
        if p == "N":
            if no_evidence_as == "exclude":
                continue
            p = "0"
        if p == "1" and t:
            tp += 1
        elif p == "1":
            fp += 1
        elif t:
            fn += 1
        else:
            tn += 1
    return tp, tn, fp, fn


def scalar_kalman(p0, q, r, measurements, x0):
    """Scalar constant-state Kalman filter; returns per-step (x, p, gain)."""
    x, p = x0, p0
    out = []
    for z in measurements:
        p = p + q
        k = p / (p + r)
        x = x + k * (z - x)
        p = (1 - k) * p
        out.append((x, p, k))
    return out
