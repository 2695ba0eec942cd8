"""Kalman smoothing of (mu, sigma, pi) and the per-frame rain decision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from pluvio.hosmix import MixtureParams

RAIN = "rain"
NO_RAIN = "no-rain"
WARM_UP = "warm-up"
NO_EVIDENCE = "no-evidence"
DECISIONS = (RAIN, NO_RAIN, WARM_UP, NO_EVIDENCE)


@dataclass(frozen=True, eq=False)
class KalmanState:
    """Identity-dynamics filter over the state vector (mu, sigma, pi)."""

    x: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    gain: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def params(self) -> MixtureParams:
        return MixtureParams(*(float(v) for v in self.x))


def _vec(p: MixtureParams) -> np.ndarray:
    return np.array([p.mu, p.sigma, p.pi], dtype=np.float64)


def kalman_init(
    q_var: float = 0.01,
    r_var: float = 0.1,
    initial: MixtureParams | None = None,
    p0: float | None = None,
) -> KalmanState:
    """Start the filter at ``initial``.

    The initial state covariance defaults to ``r_var`` on the diagonal, the
    uncertainty of the single measurement the state was taken from.
    """
    if not (q_var > 0 and r_var > 0):
        raise ValueError(f"noise variances must be > 0, got q={q_var}, r={r_var}")
    if initial is None:
        raise ValueError("initial estimate required")
    eye = np.eye(3)
    return KalmanState(_vec(initial), eye * (r_var if p0 is None else p0), eye * q_var, eye * r_var)


def kalman_predict(state: KalmanState) -> KalmanState:
    return KalmanState(state.x.copy(), state.P + state.Q, state.Q, state.R)


def kalman_update(state: KalmanState, measurement: MixtureParams) -> KalmanState:
    z = _vec(measurement)
    K = state.P @ np.linalg.inv(state.P + state.R)
    x = state.x + K @ (z - state.x)
    P = (np.eye(3) - K) @ state.P
    P = 0.5 * (P + P.T)
    return KalmanState(x, P, state.Q, state.R, K)


@dataclass(frozen=True)
class RainDecision:
    index: int
    decision: str
    pi_smoothed: float = math.nan
    pi_raw: float = math.nan
    ks_d: float = math.nan

    @property
    def is_rain(self) -> bool:
        return self.decision == RAIN


def rain_decision(
    state: Optional[KalmanState],
    raw: MixtureParams,
    ks_passed: bool,
    pi_rain: float,
    *,
    mode: str = "kalman",
    index: int = 0,
    ks_d: float = math.nan,
    q_var: float = 0.01,
    r_var: float = 0.1,
) -> tuple[RainDecision, Optional[KalmanState]]:
    """Decide one frame and advance the filter.

    The filter is predicted every frame once initialised, and corrected with
    ``raw`` only when the KS gate passed and raw pi exceeds ``pi_rain``; the
    first such frame initialises it. The decision compares pi against
    ``pi_rain`` before the correction: raw pi in ``"em"`` mode, the
    predicted pi in ``"kalman"`` mode (raw pi on the initialising frame).
    Returns (decision, new_state).
    """
    if not 0 <= pi_rain <= 1:
        raise ValueError(f"pi_rain must lie in [0, 1], got {pi_rain}")
    if mode not in ("em", "kalman"):
        raise ValueError(f"unknown decision mode {mode!r}")
    prior = kalman_predict(state) if state is not None else None
    smoothed = float(prior.x[2]) if prior is not None else math.nan
    accept = ks_passed and raw.pi > pi_rain

    new_state = prior
    if accept:
        if prior is None:
            new_state = kalman_init(q_var, r_var, raw)
            smoothed = raw.pi
        else:
            new_state = kalman_update(prior, raw)

    if not ks_passed:
        is_rain = False
    elif mode == "em":
        is_rain = raw.pi > pi_rain
    else:
        is_rain = smoothed > pi_rain
    decision = RainDecision(index, RAIN if is_rain else NO_RAIN, smoothed, raw.pi, ks_d)
    return decision, new_state


class RainTracker:
    """Per-stream holder of the Kalman state and decision settings."""

    def __init__(self, pi_rain: float = 0.40, mode: str = "kalman", q_var: float = 0.01, r_var: float = 0.1):
        if not (q_var > 0 and r_var > 0):
            raise ValueError("noise variances must be > 0")
        self.pi_rain = pi_rain
        self.mode = mode
        self.q_var = q_var
        self.r_var = r_var
        self.state: Optional[KalmanState] = None

    @property
    def smoothed_pi(self) -> float:
        return math.nan if self.state is None else float(self.state.x[2])

    def step(self, index: int, raw: MixtureParams, ks_d: float, ks_passed: bool) -> RainDecision:
        decision, self.state = rain_decision(
            self.state,
            raw,
            ks_passed,
            self.pi_rain,
            mode=self.mode,
            index=index,
            ks_d=ks_d,
            q_var=self.q_var,
            r_var=self.r_var,
        )
        return decision

    def skip(self, index: int, decision: str) -> RainDecision:
        """Record a frame without a fit (warm-up or no evidence)."""
        if decision == NO_EVIDENCE and self.state is not None:
            self.state = kalman_predict(self.state)
        return RainDecision(index, decision, self.smoothed_pi)
