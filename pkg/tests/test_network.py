"""Test the simulated center-node capture."""

from dataclasses import replace

import numpy as np
import pytest

from isaqn_sim.coherent_receiver import band_select, demodulate, frame_sync
from isaqn_sim.exceptions import BandConflictError, SyncFailureError
from isaqn_sim.network import (
    NodeFailure,
    build_registry,
    derive_seed,
    event_phases,
    simulate_capture,
    vibration_phases,
)
from isaqn_sim.node_modulator import NodeConfig
from isaqn_sim.scenario import VibrationEvent, VibrationWaveform


class TestDeriveSeed:
    """Test per-stream seed derivation."""

    def test_deterministic(self):
        """Test the same labels give the same seed."""
        assert derive_seed(7, "symbols", 1) == derive_seed(7, "symbols", 1)

    def test_independent_streams(self):
        """Test labels, node ids and run seeds all separate streams."""
        seeds = {
            derive_seed(7, "symbols", 1),
            derive_seed(7, "symbols", 2),
            derive_seed(7, "channel", 1),
            derive_seed(8, "symbols", 1),
        }

        assert len(seeds) == 4


class TestBuildRegistry:
    """Test registry construction."""

    def test_sorted_by_id(self):
        """Test nodes are registered in id order whatever the input order."""
        nodes = [NodeConfig(3, 300e3, 50e3), NodeConfig(1, 100e3, 50e3)]

        assert build_registry(nodes).registered_ids() == [1, 3]

    def test_conflict(self):
        """Test overlapping bands are refused."""
        nodes = [NodeConfig(1, 100e3, 50e3), NodeConfig(2, 120e3, 50e3)]

        with pytest.raises(BandConflictError):
            build_registry(nodes)


class TestSimulateCapture:
    """Test capture simulation."""

    def test_deterministic(self, small_3node):
        """Test equal seeds give bit-identical captures."""
        first = simulate_capture(small_3node, seed=3, n_symbols=2000)
        second = simulate_capture(small_3node, seed=3, n_symbols=2000)
        other = simulate_capture(small_3node, seed=4, n_symbols=2000)

        np.testing.assert_array_equal(first.detected.samples, second.detected.samples)
        assert first.capture_offset == second.capture_offset
        assert not np.array_equal(first.detected.samples, other.detected.samples)

    def test_truth(self, small_capture):
        """Test ground truth carries the symbols and channel of every node."""
        assert sorted(small_capture.truth) == [1, 2, 3]
        for truth in small_capture.truth.values():
            assert len(truth.symbols) == 20_000
            assert truth.channel.transmittance == pytest.approx(0.0789, abs=1e-4)
            assert truth.vibration_phase is None

    def test_shape(self, small_capture):
        """Test the capture covers the whole frame at 20 samples per symbol."""
        layout = small_capture.layout
        total = layout.sync_word.size + layout.payload_length(20_000)

        assert len(small_capture.detected) == total * 20
        assert small_capture.symbol_rate == pytest.approx(50e3)
        assert small_capture.duration_s == pytest.approx(total / 50e3)

    def test_sync_finds_capture_offset(self, small_capture):
        """Test the sync word sits where the capture offset put it."""
        layout = small_capture.layout
        total = layout.sync_word.size + layout.payload_length(20_000)
        node = small_capture.nodes[1]

        selected = band_select(small_capture.detected, small_capture.registry, 1)
        stream = demodulate(selected, node.carrier_hz, node.baseband_hz)
        sync = frame_sync(stream, layout.sync_word)

        assert sync.offset == (total - small_capture.capture_offset) % total

    def test_vibrations_optional(self, small_3node):
        """Test vibration events reach the truth only when enabled."""
        event = VibrationEvent(
            waveform=VibrationWaveform(frequency_hz=50.0, amplitude_rad=2.0), nodes=(2,)
        )
        scenario = replace(small_3node, vibration_events=(event,))

        vibrating = simulate_capture(scenario, seed=1, n_symbols=2000)
        quiet = simulate_capture(scenario, seed=1, n_symbols=2000, vibrations=False)

        assert vibrating.truth[2].vibration_phase is not None
        assert vibrating.truth[1].vibration_phase is None
        assert quiet.truth[2].vibration_phase is None


class TestEventPhases:
    """Test conversion of events into per-node phase series."""

    def test_node_event_in_radians(self, small_3node):
        """Test a node event scales its waveform by amplitude_rad."""
        time_s = np.linspace(0.0, 0.1, 1001)
        event = VibrationEvent(
            waveform=VibrationWaveform(frequency_hz=50.0, amplitude_rad=2.0),
            nodes=(1, 3),
        )

        phases = event_phases(event, small_3node, time_s)

        assert sorted(phases) == [1, 3]
        np.testing.assert_allclose(phases[1], 2.0 * np.sin(2 * np.pi * 50.0 * time_s))

    def test_node_event_in_volts(self, small_3node):
        """Test a PZT drive voltage is converted through the node's PZT."""
        time_s = np.array([0.005])
        event = VibrationEvent(
            waveform=VibrationWaveform(frequency_hz=50.0, amplitude_v=10.0),
            nodes=(1,),
        )

        phases = event_phases(event, small_3node, time_s)

        assert phases[1][0] == pytest.approx(891.2, abs=1.0)

    def test_events_add(self, small_3node):
        """Test overlapping events on a node sum."""
        time_s = np.linspace(0.0, 0.1, 101)
        event = VibrationEvent(
            waveform=VibrationWaveform(frequency_hz=50.0, amplitude_rad=1.0), nodes=(2,)
        )
        scenario = replace(small_3node, vibration_events=(event, event))

        phases = vibration_phases(scenario, time_s)

        np.testing.assert_allclose(phases[2], 2.0 * np.sin(2 * np.pi * 50.0 * time_s))


class TestNodeFailure:
    """Test failure records."""

    def test_from_simulator_error(self):
        """Test simulator errors keep their kind."""
        failure = NodeFailure.from_error(2, SyncFailureError("no peak"))

        assert failure.to_dict() == {
            "node_id": 2,
            "kind": "sync-failure",
            "message": "no peak",
        }

    def test_from_foreign_error(self):
        """Test other errors are recorded as node failures."""
        assert NodeFailure.from_error(1, RuntimeError("boom")).kind == "node-failure"
