"""Acceptance criteria, one test each, each printing a PASS/FAIL line.

The lines are also collected in ``RESULTS`` and repeated in the terminal
summary by ``conftest.pytest_terminal_summary``.
"""

import json
import math
import os
import subprocess
import sys
import time

import numpy as np
import pytest
from golden_metrics import GOLDEN_ROWS, TOLERANCE
from oracles import count_confusion, flood_fill_labels, ks_exhaustive, moments_double_sum

from pluvio.config import PipelineConfig
from pluvio.evaluate import ConfusionMatrix, confusion, metrics
from pluvio.gridsearch import default_grid
from pluvio.hosmix import HOS, N_BINS, MixtureParams, em_fit, empirical_cdf, gaussian_cdf_on_bins, ks_statistic
from pluvio.pipeline import process_video
from pluvio.streaks import central_moments, connected_components, streak_geometry
from pluvio.synthrain import RainSpec, SceneSpec, StreakPlacement, generate_sequence, render_frame
from pluvio.temporal import kalman_init, kalman_predict, kalman_update

RESULTS = []


def verdict(number, title, ok, detail):
    line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'} {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_1_metric_golden_values():
    t0 = time.perf_counter()
    bad = []
    for seq, method, tp, tn, fp, fn, acc, f1, mcc in GOLDEN_ROWS:
        m = metrics(ConfusionMatrix(tp, tn, fp, fn))
        for name, got, want in (("acc", m.accuracy, acc), ("f1", m.f1, f1), ("mcc", m.mcc, mcc)):
            if abs(got - want) > TOLERANCE:
                bad.append(f"{seq}/{method} {name} computed {got:.6f} vs published {want:.4f}")
    zero_rule = metrics(ConfusionMatrix(0, 1069231, 0, 102717)).mcc == 0.0
    elapsed = time.perf_counter() - t0
    ok = not bad and zero_rule and elapsed < 1.0
    detail = f"{len(GOLDEN_ROWS) * 3 - len(bad)}/{len(GOLDEN_ROWS) * 3} values within {TOLERANCE:g}, zero-denominator rule {'ok' if zero_rule else 'broken'}, {elapsed * 1000:.1f} ms"
    if bad:
        detail += "; mismatches: " + "; ".join(bad)
    verdict(1, "metric golden test", ok, detail)


def test_2_grid_cardinality():
    t0 = time.perf_counter()
    grid = default_grid()
    n = sum(1 for _ in grid.combinations())
    elapsed = time.perf_counter() - t0
    verdict(2, "grid cardinality", n == 9600 and elapsed < 1.0, f"{n} combinations enumerated in {elapsed * 1000:.1f} ms")


def test_3_synthetic_detection_bands(tmp_path):
    t0 = time.perf_counter()
    scene = SceneSpec(width=320, height=240, frames=900, background="textured-with-noise", noise_std=2.0)
    rain = RainSpec(
        streaks_per_frame=60,
        orientation_mean=85,
        orientation_std=4,
        boost=40,
        clutter_fraction=0.1,
        intervals=((500, 700),),
        dry_clutter_per_frame=3,
    )
    source, truth = generate_sequence(scene, rain, 7, tmp_path)
    series = process_video(PipelineConfig(), source)
    codes = np.array(series.codes)
    frames = np.arange(len(codes))
    wet = (frames >= 500) & truth.rain
    dry = (frames >= 500) & ~truth.rain
    rain_frac = float(np.mean(codes[wet] == "1"))
    dry_frac = float(np.mean(codes[dry] == "1"))
    elapsed = time.perf_counter() - t0
    ok = rain_frac >= 0.60 and dry_frac <= 0.40 and elapsed < 300 and np.all(codes[:500] == "W")
    verdict(
        3,
        "synthetic detection bands",
        ok,
        f"rain frames flagged {rain_frac:.3f} (need >= 0.60), dry frames flagged {dry_frac:.3f} (need <= 0.40), {elapsed:.1f} s",
    )


def test_4_em_recovery():
    t0 = time.perf_counter()
    trials = successes = 0
    worst = []
    for mu in (45, 85, 135):
        for sigma in (2, 5, 10):
            for pi in (0.4, 0.7, 1.0):
                ok_here = 0
                for seed in range(10):
                    rng = np.random.default_rng([mu, sigma, int(pi * 10), seed])
                    n = 10_000
                    gauss = rng.random(n) < pi
                    x = np.where(gauss, rng.normal(mu, sigma, n), rng.uniform(-0.5, 179.5, n))
                    idx = np.clip(np.rint(x), 0, N_BINS - 1).astype(int)
                    fit = em_fit(HOS(np.bincount(idx, minlength=N_BINS).astype(float)))
                    p = fit.params
                    good = abs(p.mu - mu) <= 2 and abs(p.sigma - sigma) <= 0.2 * sigma and abs(p.pi - pi) <= 0.1
                    ok_here += good
                trials += 10
                successes += ok_here
                if ok_here < 10:
                    worst.append(f"({mu},{sigma},{pi}) {ok_here}/10")
    elapsed = time.perf_counter() - t0
    rate = successes / trials
    detail = f"{successes}/{trials} trials recovered ({rate:.1%}, need >= 90%), {elapsed:.1f} s"
    if worst:
        detail += "; below 10/10: " + ", ".join(worst)
    verdict(4, "EM recovery", rate >= 0.9 and elapsed < 30, detail)


def test_5_oracle_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    cc_ok = mom_ok = True
    blobs_checked = 0
    for _ in range(100):
        mask = rng.random((64, 64)) < rng.uniform(0.05, 0.6)
        blobs = connected_components(mask, 8)
        ours = [set(zip(b.xs.tolist(), b.ys.tolist())) for b in blobs]
        cc_ok &= ours == flood_fill_labels(mask.tolist(), 8)
        for b in blobs[:15]:
            m = central_moments(b)
            mom_ok &= (m.m20, m.m11, m.m02) == moments_double_sum(zip(b.xs.tolist(), b.ys.tolist()))
            blobs_checked += 1
    ks_ok = True
    ks_gap = 0.0
    for _ in range(100):
        bins = rng.random(N_BINS) * (rng.random(N_BINS) < 0.6)
        bins[rng.integers(N_BINS)] += 0.5
        p = MixtureParams(rng.uniform(0, 179), rng.uniform(0.5, 40), 1.0)
        h = HOS(bins)
        f, fn = gaussian_cdf_on_bins(p), empirical_cdf(h)
        scan = max(abs(float(fn[b]) - float(f[b])) for b in range(N_BINS))
        d = ks_statistic(h, p)
        ks_ok &= d == scan
        ks_gap = max(ks_gap, abs(d - ks_exhaustive(bins.tolist(), p.mu, p.sigma)))
    ks_ok &= ks_gap < 1e-12
    cm_ok = True
    for _ in range(100):
        pred = rng.choice(["0", "1", "W", "N"], 1000, p=[0.4, 0.4, 0.1, 0.1]).tolist()
        truth = (rng.random(1000) < 0.5).tolist()
        cm = confusion(pred, truth)
        cm_ok &= (cm.tp, cm.tn, cm.fp, cm.fn) == count_confusion(pred, truth)
    elapsed = time.perf_counter() - t0
    ok = cc_ok and mom_ok and ks_ok and cm_ok and elapsed < 30
    verdict(
        5,
        "oracle equivalence",
        ok,
        f"components {'match' if cc_ok else 'DIFFER'} on 100 masks; moments {'exact' if mom_ok else 'DIFFER'} on {blobs_checked} blobs; "
        f"KS {'exact' if ks_ok else 'DIFFER'} (independent CDF gap {ks_gap:.1e}); confusion {'match' if cm_ok else 'DIFFER'} on 100 traces; {elapsed:.1f} s",
    )


def test_6_line_geometry():
    scene = SceneSpec(width=80, height=80, intensity=100)
    errors = {}
    for phi in (0, 30, 45, 60, 90, 120, 150):
        frame = render_frame(scene, [StreakPlacement(40.0, 40.0, float(phi), 31, 1, 40.0)], 0, 0)
        blobs = connected_components(frame.pixels > 100)
        assert len(blobs) == 1
        theta = streak_geometry(central_moments(blobs[0]), 0.5).theta
        errors[phi] = abs((theta - phi + 90) % 180 - 90)
    worst = max(errors.values())
    verdict(6, "line geometry", worst <= 2.0, "max |theta - phi| = " + f"{worst:.3f} deg over " + ", ".join(f"{k}:{v:.2f}" for k, v in errors.items()))


def test_7_numerical_properties():
    rng = np.random.default_rng(77)
    nll_ok = True
    for i in range(100):
        if i % 2:
            bins = rng.random(N_BINS) ** 3 * 20
        else:
            n = 2000
            mu, sigma, pi = rng.uniform(0, 179), rng.uniform(1, 30), rng.uniform(0, 1)
            x = np.where(rng.random(n) < pi, rng.normal(mu, sigma, n), rng.uniform(-0.5, 179.5, n))
            bins = np.bincount(np.clip(np.rint(x), 0, 179).astype(int), minlength=N_BINS).astype(float)
        fit = em_fit(HOS(bins))
        nll = np.array(fit.nll)
        nll_ok &= bool(np.all(np.diff(nll) <= 1e-9 * abs(nll[0])))
    trace_ok = True
    for _ in range(200):
        s = kalman_init(initial=MixtureParams(*rng.uniform(0, 100, 3)), p0=float(rng.uniform(0.001, 10)))
        for _ in range(5):
            prior = kalman_predict(s)
            s = kalman_update(prior, MixtureParams(*rng.uniform(-50, 150, 3)))
            trace_ok &= np.trace(s.P) <= np.trace(prior.P)
    gain = kalman_update(kalman_predict(kalman_init(0.01, 0.1, MixtureParams(85, 5, 0.6), p0=1.0)), MixtureParams(85, 5, 0.6)).gain
    gain_err = float(np.max(np.abs(np.diag(gain) - 1.01 / 1.11)))
    ok = nll_ok and trace_ok and gain_err <= 1e-12
    verdict(
        7,
        "numerical properties",
        ok,
        f"EM NLL non-increasing on 100 HOS: {nll_ok}; posterior trace <= prior on 1000 updates: {trace_ok}; gain error {gain_err:.1e}",
    )


SCENE = """scene.width = 160
scene.height = 120
scene.frames = 620
scene.background = textured-with-noise
scene.noise_std = 2
"""
RAIN = """rain.streaks_per_frame = 20
rain.intervals = 520:580
rain.dry_clutter_per_frame = 1
"""


def _cli_run(root):
    root.mkdir()
    (root / "scene.txt").write_text(SCENE)
    (root / "rain.txt").write_text(RAIN)
    env = {k: v for k, v in os.environ.items() if k != "SOURCE_DATE_EPOCH"}

    def pluvio(*args):
        subprocess.run([sys.executable, "-m", "pluvio", *args], cwd=root, env=env, check=True, capture_output=True)

    pluvio("synth", "--scene", "scene.txt", "--rain", "rain.txt", "--seed", "42", "--out", "data", "--name", "cam")
    pluvio("detect", "--input", "data/cam.y8", "--out", "det.csv")
    pluvio("eval", "--detections", "det.csv", "--labels", "data/cam_labels.csv", "--out", "report.json")
    report = json.loads((root / "report.json").read_text())
    stamp = report.pop("_meta")["generated_at"]
    return {
        "y8": (root / "data" / "cam.y8").read_bytes(),
        "csv": (root / "det.csv").read_bytes(),
        "report": report,
        "table": (root / "report.txt").read_bytes(),
        "stamp": stamp,
    }


def test_8_cli_determinism(tmp_path):
    a = _cli_run(tmp_path / "run1")
    time.sleep(1.1)
    b = _cli_run(tmp_path / "run2")
    same = {k: a[k] == b[k] for k in ("y8", "csv", "report", "table")}
    ok = all(same.values())
    verdict(
        8,
        "CLI determinism",
        ok,
        ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items())
        + f" ({len(a['csv'].splitlines()) - 2} detection rows; timestamps {a['stamp']} / {b['stamp']})",
    )
