"""Test configuration and fixtures."""

from dataclasses import replace

import numpy as np
import pytest

from isaqn_sim.coherent_receiver import DetectorParams
from isaqn_sim.event_localizer import NetworkGeometry
from isaqn_sim.fiber_channel import FiberConstants
from isaqn_sim.network import Capture, simulate_capture
from isaqn_sim.scenario import (
    ScenarioConfig,
    VibrationEvent,
    VibrationWaveform,
    load_scenario,
)
from isaqn_sim.signal_core import FrameLayout, default_sync_word
from isaqn_sim.spm_sensing import VibrationTrace

TRIANGLE = ((0.0, 0.0), (17320.51, 0.0), (8660.25, 15000.0))


@pytest.fixture
def fiber():
    """Default fused-silica fiber."""
    return FiberConstants()


@pytest.fixture
def detector():
    """Detector with the experimental efficiency and electronic noise."""
    return DetectorParams()


@pytest.fixture
def ideal_detector():
    """Shot-noise-limited detector."""
    return DetectorParams(quantum_efficiency=1.0, electronic_noise_snu=0.0)


@pytest.fixture
def layout():
    """Frame layout with a strong pilot and a 64-symbol sync word."""
    return FrameLayout(
        pilot_period=10,
        pilot_amplitude=100.0,
        sync_word=default_sync_word(64),
        symbols_per_frame=100_000,
    )


@pytest.fixture
def triangle_geometry():
    """Equilateral triangle with a 10 km circumradius and 10 km feeders."""
    return NetworkGeometry(
        node_positions=TRIANGLE,
        center_position=(8660.25, 5000.0),
        fiber_lengths_m=(10_000.0,) * 3,
        wave_speed_mps=6000.0,
    )


@pytest.fixture(scope="session")
def paper_3node() -> ScenarioConfig:
    """Bundled three-node scenario at desk scale."""
    return load_scenario("paper_3node")


@pytest.fixture(scope="session")
def paper_capture(paper_3node) -> Capture:
    """Full-length capture of the bundled three-node scenario."""
    return simulate_capture(paper_3node, seed=paper_3node.seeds[0])


@pytest.fixture(scope="session")
def small_3node(paper_3node) -> ScenarioConfig:
    """Three-node scenario with a shorter frame for quick pipeline tests."""
    return replace(paper_3node, n_symbols=20_000)


@pytest.fixture(scope="session")
def small_capture(small_3node) -> Capture:
    """One vibration-free capture shared by read-only tests."""
    return simulate_capture(small_3node, seed=7)


@pytest.fixture(scope="session")
def vibrating_scenario(small_3node) -> ScenarioConfig:
    """Short-pilot-period scenario with a 500 Hz, 3 rad vibration on node 2."""
    layout = FrameLayout(
        pilot_period=4,
        pilot_amplitude=100.0,
        sync_word=default_sync_word(64),
        symbols_per_frame=100_000,
    )
    event = VibrationEvent(
        waveform=VibrationWaveform(frequency_hz=500.0, amplitude_rad=3.0), nodes=(2,)
    )
    return replace(
        small_3node, frame=layout, vibration_events=(event,), phase_smoothing=1
    )


@pytest.fixture(scope="session")
def vibrating_capture(vibrating_scenario) -> Capture:
    """Capture of the vibrating scenario."""
    return simulate_capture(vibrating_scenario, seed=11)


@pytest.fixture
def make_trace():
    """Build a VibrationTrace from a phase series."""

    def _make(phase, sample_rate=5000.0):
        phase = np.asarray(phase, dtype=np.float64)
        time_s = np.arange(phase.size) / sample_rate
        return VibrationTrace(
            time_s=time_s,
            unwrapped_phase_rad=phase,
            length_change_m=phase / FiberConstants().phase_per_meter,
            sample_rate=sample_rate,
        )

    return _make


@pytest.fixture
def write_scenario(tmp_path):
    """Write scenario YAML text to a temporary file."""

    def _write(text, name="scenario.yaml"):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
