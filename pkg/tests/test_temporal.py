import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import scalar_kalman

from pluvio.hosmix import MixtureParams
from pluvio.temporal import (
    NO_EVIDENCE,
    NO_RAIN,
    RAIN,
    WARM_UP,
    RainTracker,
    kalman_init,
    kalman_predict,
    kalman_update,
    rain_decision,
)

START = MixtureParams(85.0, 5.0, 0.6)


def test_init_identity_and_defaults():
    s = kalman_init(initial=START)
    assert s.params == START
    np.testing.assert_array_equal(s.Q, 0.01 * np.eye(3))
    np.testing.assert_array_equal(s.R, 0.1 * np.eye(3))
    np.testing.assert_array_equal(s.P, 0.1 * np.eye(3))


@pytest.mark.parametrize("q,r", [(0.0, 0.1), (0.01, 0.0), (-1.0, 0.1)])
def test_init_rejects_non_positive_noise(q, r):
    with pytest.raises(ValueError):
        kalman_init(q, r, START)


def test_predict_adds_q_and_keeps_state():
    s = kalman_init(initial=START, p0=1.0)
    p = kalman_predict(s)
    np.testing.assert_allclose(p.P, s.P + s.Q)
    np.testing.assert_array_equal(p.x, s.x)
    for _ in range(10):
        s = kalman_predict(s)
    np.testing.assert_allclose(s.P, np.eye(3) * (1.0 + 10 * 0.01))


def test_one_step_gain():
    s = kalman_update(kalman_predict(kalman_init(initial=START, p0=1.0)), START)
    np.testing.assert_allclose(np.diag(s.gain), 1.01 / 1.11, rtol=0, atol=1e-12)


def test_zero_innovation_leaves_state():
    s = kalman_update(kalman_predict(kalman_init(initial=START)), START)
    np.testing.assert_allclose(s.x, [85.0, 5.0, 0.6], rtol=0, atol=1e-15)


def test_constant_measurement_matches_scalar_recursion():
    z = MixtureParams(90.0, 3.0, 0.9)
    s = kalman_init(initial=START)
    ref = scalar_kalman(0.1, 0.01, 0.1, [0.9] * 100, 0.6)
    prev_gap = abs(0.6 - 0.9)
    for step in range(100):
        s = kalman_update(kalman_predict(s), z)
        x, p, k = ref[step]
        assert s.x[2] == pytest.approx(x, abs=1e-12)
        assert s.P[2, 2] == pytest.approx(p, abs=1e-12)
        gap = abs(s.x[2] - 0.9)
        assert gap <= prev_gap
        prev_gap = gap
    np.testing.assert_allclose(s.x, [90.0, 3.0, 0.9], atol=1e-3)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0.001, 10), min_size=3, max_size=3),
    st.lists(st.floats(-100, 100), min_size=3, max_size=3),
)
def test_posterior_trace_below_prior(p0, z):
    s = kalman_init(initial=START)
    s = type(s)(s.x, np.diag(p0), s.Q, s.R)
    prior = kalman_predict(s)
    post = kalman_update(prior, MixtureParams(*z))
    assert np.trace(post.P) <= np.trace(prior.P)
    np.testing.assert_array_equal(post.P, post.P.T)
    assert np.all(np.linalg.eigvalsh(prior.P - post.P) >= -1e-12)


def test_decision_threshold_strict():
    d, _ = rain_decision(None, MixtureParams(85, 5, 0.41), True, 0.40, mode="em")
    assert d.decision == RAIN
    d, _ = rain_decision(None, MixtureParams(85, 5, 0.40), True, 0.40, mode="em")
    assert d.decision == NO_RAIN


@pytest.mark.parametrize("mode", ["em", "kalman"])
def test_ks_failure_is_no_rain(mode):
    state = kalman_init(initial=MixtureParams(85, 5, 0.9))
    d, new = rain_decision(state, MixtureParams(85, 5, 0.99), False, 0.40, mode=mode)
    assert d.decision == NO_RAIN
    # predict only
    np.testing.assert_array_equal(new.x, state.x)
    np.testing.assert_allclose(new.P, state.P + state.Q)


def test_first_accepted_estimate_initialises():
    raw = MixtureParams(80, 4, 0.7)
    d, s = rain_decision(None, raw, True, 0.4, mode="kalman")
    assert d.decision == RAIN and d.pi_smoothed == 0.7
    assert s.params == raw
    d, s = rain_decision(None, MixtureParams(80, 4, 0.3), True, 0.4, mode="kalman")
    assert d.decision == NO_RAIN and s is None


def test_kalman_mode_uses_prior():
    state = kalman_init(initial=MixtureParams(85, 5, 0.9))
    # raw pi below threshold, smoothed prior above it
    d, _ = rain_decision(state, MixtureParams(85, 5, 0.3), True, 0.4, mode="kalman")
    assert d.decision == RAIN and d.pi_smoothed == pytest.approx(0.9)
    d, _ = rain_decision(state, MixtureParams(85, 5, 0.3), True, 0.4, mode="em")
    assert d.decision == NO_RAIN


def test_bad_inputs():
    with pytest.raises(ValueError):
        rain_decision(None, START, True, 1.5)
    with pytest.raises(ValueError):
        rain_decision(None, START, True, 0.4, mode="mean")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=60), st.floats(0.05, 0.95))
def test_modes_agree_when_pi_on_same_side(stream, threshold):
    em, kf = RainTracker(threshold, "em"), RainTracker(threshold, "kalman")
    for i, (pi, passed) in enumerate(stream):
        raw = MixtureParams(85, 5, pi)
        a = em.step(i, raw, 0.1, passed)
        b = kf.step(i, raw, 0.1, passed)
        smoothed = b.pi_smoothed
        if not np.isnan(smoothed) and (pi > threshold) == (smoothed > threshold):
            assert a.decision == b.decision
        if b.decision == RAIN:
            assert smoothed > threshold


def test_tracker_skip():
    t = RainTracker()
    assert t.skip(0, WARM_UP).decision == WARM_UP
    assert t.state is None
    t.step(1, MixtureParams(85, 5, 0.8), 0.1, True)
    p_before = t.state.P.copy()
    rec = t.skip(2, NO_EVIDENCE)
    assert rec.decision == NO_EVIDENCE and not rec.is_rain
    np.testing.assert_allclose(t.state.P, p_before + t.state.Q)
