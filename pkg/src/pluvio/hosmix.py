"""Orientation histogram, Gaussian-uniform EM fit and KS goodness-of-fit gate."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from pluvio.errors import NoEvidenceError

N_BINS = 180
BIN_CENTERS = np.arange(N_BINS, dtype=np.float64)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
SIGMA_FLOOR = 0.5
PI_CEILING = 1.0 - 1e-9


@dataclass(frozen=True, eq=False)
class HOS:
    bins: np.ndarray

    def __post_init__(self):
        if self.bins.shape != (N_BINS,):
            raise ValueError(f"HOS needs {N_BINS} bins, got shape {self.bins.shape}")
        if np.any(self.bins < 0):
            raise ValueError("HOS bins must be non-negative")

    @property
    def total(self) -> float:
        return float(self.bins.sum())


@dataclass(frozen=True)
class MixtureParams:
    mu: float
    sigma: float
    pi: float


@dataclass(frozen=True)
class FitReport:
    params: MixtureParams
    iterations: int
    converged: bool
    ks: float
    nll: tuple = field(default=(), repr=False)


def hos_from_arrays(theta, dtheta, weight, min_dtheta: float = 0.0) -> HOS:
    """Sum one Gaussian kernel per streak, sampled at the integer bins.

    ``min_dtheta`` widens kernels narrower than that many degrees so that
    a streak cannot fall between bin centres and vanish.
    """
    theta = np.asarray(theta, dtype=np.float64)
    if theta.size == 0:
        return HOS(np.zeros(N_BINS))
    s = np.maximum(np.asarray(dtheta, dtype=np.float64), min_dtheta)
    w = np.asarray(weight, dtype=np.float64)
    z = (BIN_CENTERS[None, :] - theta[:, None]) / s[:, None]
    kernels = (w / (s * _SQRT_2PI))[:, None] * np.exp(-0.5 * z * z)
    return HOS(kernels.sum(axis=0))


def build_hos(streaks, min_dtheta: float = 0.0) -> HOS:
    if not streaks:
        return HOS(np.zeros(N_BINS))
    arr = np.array([(s.theta, s.dtheta, s.weight) for s in streaks], dtype=np.float64)
    return hos_from_arrays(arr[:, 0], arr[:, 1], arr[:, 2], min_dtheta)


def initial_params(hos: HOS) -> MixtureParams:
    """Peak bin for mu, spread around the peak (clamped to [1, 45]) for sigma, pi = 0.5."""
    h = hos.bins
    mu0 = float(np.argmax(h))
    sd = math.sqrt(float((h * (BIN_CENTERS - mu0) ** 2).sum() / h.sum()))
    return MixtureParams(mu0, min(max(sd, 1.0), 45.0), 0.5)


def _gauss(mu, sigma):
    z = (BIN_CENTERS - mu) / sigma
    return np.exp(-0.5 * z * z) / (sigma * _SQRT_2PI)


def neg_log_likelihood(hos: HOS, params: MixtureParams) -> float:
    """Weighted NLL of the HOS under pi*N(mu, sigma) + (1-pi)/180."""
    mix = params.pi * _gauss(params.mu, params.sigma) + (1.0 - params.pi) / N_BINS
    h = hos.bins
    nz = h > 0
    with np.errstate(divide="ignore"):
        return float(-(h[nz] * np.log(mix[nz])).sum())


def em_fit(
    hos: HOS,
    max_iterations: int = 100,
    tolerance: float = 1e-4,
    init: MixtureParams | None = None,
) -> FitReport:
    """Fit the Gaussian-uniform mixture to the HOS by EM.

    Each bin is a sample at its centre weighted by the bin value. Stops
    after ``max_iterations`` or once every parameter moves by less than
    ``tolerance`` relative to its previous value. Raises NoEvidenceError on
    an empty histogram.
    """
    h = hos.bins
    total = h.sum()
    if not total > 0:
        raise NoEvidenceError("HOS has zero mass")
    if max_iterations < 1:
        raise ValueError("max_iterations must be >= 1")
    p = init if init is not None else initial_params(hos)
    mu, sigma, pi = p.mu, max(p.sigma, SIGMA_FLOOR), min(max(p.pi, 0.0), PI_CEILING)
    uniform = 1.0 / N_BINS
    nll = []
    converged = False
    it = 0
    for it in range(1, max_iterations + 1):
        g = pi * _gauss(mu, sigma)
        mix = g + (1.0 - pi) * uniform
        with np.errstate(divide="ignore", invalid="ignore"):
            nll.append(float(-(h * np.log(np.where(h > 0, mix, 1.0))).sum()))
            resp = np.where(mix > 0, g / mix, 0.0)
        rw = h * resp
        mass = rw.sum()
        if mass <= total * 1e-12:
            # gaussian component has lost all support
            mu_n, sigma_n, pi_n = mu, sigma, 0.0
        else:
            pi_n = min(mass / total, PI_CEILING)
            mu_n = float((rw * BIN_CENTERS).sum() / mass)
            sigma_n = max(math.sqrt(float((rw * (BIN_CENTERS - mu_n) ** 2).sum() / mass)), SIGMA_FLOOR)
        change = max(
            abs(mu_n - mu) / max(abs(mu), 1e-12),
            abs(sigma_n - sigma) / sigma,
            abs(pi_n - pi) / max(pi, 1e-12),
        )
        mu, sigma, pi = mu_n, sigma_n, float(pi_n)
        if pi == 0.0 or change < tolerance:
            converged = True
            break
    params = MixtureParams(mu, sigma, pi)
    nll.append(neg_log_likelihood(hos, params))
    return FitReport(params, it, converged, ks_statistic(hos, params), tuple(nll))


def gaussian_cdf_on_bins(params: MixtureParams) -> np.ndarray:
    """CDF of N(mu, sigma) truncated to the cells [-0.5, 179.5], read at each bin's upper edge."""
    edges = (np.arange(N_BINS + 1, dtype=np.float64) - 0.5 - params.mu) / params.sigma
    phi = ndtr(edges)
    span = phi[-1] - phi[0]
    if span > 0:
        return np.clip((phi[1:] - phi[0]) / span, 0.0, 1.0)
    # all gaussian mass lies outside the histogram range
    out = np.zeros(N_BINS) if params.mu > N_BINS / 2 else np.ones(N_BINS)
    out[-1] = 1.0
    return out


def empirical_cdf(hos: HOS) -> np.ndarray:
    total = hos.total
    if not total > 0:
        raise NoEvidenceError("HOS has zero mass")
    cdf = np.cumsum(hos.bins) / total
    cdf[-1] = 1.0
    return cdf


def ks_statistic(hos: HOS, params: MixtureParams) -> float:
    """sup |F_n - F| over the 180 bin positions."""
    d = np.abs(empirical_cdf(hos) - gaussian_cdf_on_bins(params)).max()
    return float(min(max(d, 0.0), 1.0))


def ks_gate(d: float, d_c: float) -> bool:
    """True (frame kept) iff d <= d_c."""
    return d <= d_c
