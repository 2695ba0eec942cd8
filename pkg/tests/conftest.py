import numpy as np
import pytest

from pluvio.config import PipelineConfig
from pluvio.synthrain import RainSpec, SceneSpec, generate_sequence


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_scene():
    return SceneSpec(width=96, height=72, frames=140, background="textured-with-noise", noise_std=2.0)


@pytest.fixture(scope="session")
def small_config():
    return PipelineConfig(mog_warmup_frames=40)


@pytest.fixture(scope="session")
def wet_and_dry(tmp_path_factory, small_scene):
    """A rain snippet and a dry snippet at 96x72, 140 frames each."""
    out = tmp_path_factory.mktemp("snippets")
    wet, _ = generate_sequence(small_scene, RainSpec(streaks_per_frame=15), 3, out, "wet")
    dry, _ = generate_sequence(small_scene, RainSpec(streaks_per_frame=0, dry_clutter_per_frame=2), 4, out, "dry")
    return wet.path, dry.path


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
