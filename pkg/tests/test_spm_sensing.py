"""Test spectrum monitoring and vibration recovery."""

import math
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from isaqn_sim.coherent_receiver import QuadratureStream
from isaqn_sim.exceptions import (
    BaselineRequiredError,
    InsufficientDataError,
    InvalidArgumentError,
)
from isaqn_sim.fiber_channel import transmittance
from isaqn_sim.network import simulate_capture
from isaqn_sim.scenario import VibrationEvent, VibrationWaveform
from isaqn_sim.signal_core import (
    SlotKind,
    build_frame,
    gaussian_symbols,
    occupied_half_width,
)
from isaqn_sim.spm_sensing import (
    SensingReport,
    capture_baseline,
    demodulate_phase,
    measure_band_power,
    phase_to_length,
    precision_check,
    run_spm,
    spectrum_monitor,
    strain_psd,
    unwrap_phase,
    vibration_trace,
)


class TestPhaseConversion:
    """Test phase unwrapping and length conversion."""

    def test_demodulate_phase_is_wrapped(self, layout):
        """Test pilot phase comes back in (-pi, pi]."""
        frame = build_frame(gaussian_symbols(2000, 12.0, seed=6), layout)
        stream = QuadratureStream.from_complex(
            frame.complex * np.exp(3.5j), 50e3, frame_offset=0
        )

        wrapped = demodulate_phase(stream, layout)

        assert wrapped.size == frame.pilot_positions.size
        np.testing.assert_allclose(wrapped, 3.5 - 2 * math.pi, atol=1e-9)

    def test_unwrap_ramp(self):
        """Test a wrapped linear ramp is restored."""
        ramp = np.linspace(0.0, 20.0, 101)

        np.testing.assert_allclose(unwrap_phase(np.angle(np.exp(1j * ramp))), ramp)

    def test_two_pi_is_lambda_over_k(self, fiber):
        """Test a 2 pi phase change is about 1.353 um of stretch."""
        assert phase_to_length(2 * math.pi, fiber) == pytest.approx(1.353e-6, rel=1e-3)

    def test_vibration_trace(self, layout, fiber):
        """Test the trace follows the phase applied to the pilots."""
        frame = build_frame(gaussian_symbols(20_000, 12.0, seed=1), layout)
        slot = np.arange(len(frame))
        phase = 4.0 * np.sin(2 * np.pi * 4 * slot / len(frame))
        stream = QuadratureStream.from_complex(
            frame.complex * np.exp(1j * phase), 50e3, frame_offset=0
        )

        trace = vibration_trace(stream, layout, fiber)

        pilots = frame.pilot_positions
        np.testing.assert_allclose(trace.unwrapped_phase_rad, phase[pilots], atol=1e-9)
        np.testing.assert_allclose(trace.time_s, pilots / 50e3)
        assert trace.sample_rate == pytest.approx(50e3 / 11)
        assert trace.max_phase_rad == pytest.approx(4.0, abs=0.01)


class TestStrainPsd:
    """Test the phase PSD and strain resolution."""

    def test_white_noise_floor(self, fiber):
        """Test white phase noise gives a floor of 2 sigma^2 / fs."""
        rng = np.random.default_rng(2)
        phase = 0.01 * rng.standard_normal(200_000)

        psd = strain_psd(phase, 5000.0, 2.5, fiber)

        assert psd.floor_rad2_per_hz == pytest.approx(2 * 1e-4 / 5000.0, rel=0.1)
        assert psd.strain_resolution_per_rthz == pytest.approx(
            math.sqrt(psd.floor_rad2_per_hz) / (fiber.phase_per_meter * 2.5)
        )
        assert psd.tones_hz == ()

    def test_tone_found_and_excluded(self):
        """Test a strong tone is reported and kept out of the floor."""
        rng = np.random.default_rng(3)
        t = np.arange(200_000) / 5000.0
        noise = 0.01 * rng.standard_normal(t.size)

        psd = strain_psd(noise + np.sin(2 * np.pi * 100.0 * t), 5000.0, 2.5)

        assert any(abs(tone - 100.0) < 2.0 for tone in psd.tones_hz)
        assert psd.floor_rad2_per_hz == pytest.approx(2 * 1e-4 / 5000.0, rel=0.2)

    def test_validation(self):
        """Test short series and bad gauge lengths are rejected."""
        with pytest.raises(InsufficientDataError):
            strain_psd(np.zeros(100), 5000.0, 2.5)
        with pytest.raises(InvalidArgumentError):
            strain_psd(np.zeros(5000), 5000.0, 0.0)


class TestPrecisionCheck:
    """Test pilot phase precision against the shot-noise limit."""

    def test_at_shot_noise_limit(self, paper_3node):
        """Test a strong pilot through the receive chain reaches the 1/A limit."""
        report = precision_check(20.0, 20_000, seed=4, scenario=paper_3node)

        assert report.quantum_limit == pytest.approx(1 / 20.0)
        assert report.ratio == pytest.approx(1.0, rel=0.05)
        assert report.photon_number == pytest.approx(200.0)
        assert report.quadrature_variance[0] == pytest.approx(1.0, rel=0.05)
        assert report.quadrature_variance[1] == pytest.approx(1.0, rel=0.05)
        assert report.length_std_m == pytest.approx(
            report.measured_phase_std / paper_3node.fiber.phase_per_meter
        )

    def test_scaling_with_photon_number(self):
        """Test the phase error falls as one over the square root of N."""
        amplitudes = [5.0, 10.0, 20.0, 40.0]
        reports = [precision_check(a, 20_000, seed=5) for a in amplitudes]

        slope = np.polyfit(
            np.log([r.photon_number for r in reports]),
            np.log([r.measured_phase_std for r in reports]),
            1,
        )[0]
        assert slope == pytest.approx(-0.5, abs=0.05)
        assert all(r.ratio > 0.9 for r in reports)

    def test_measures_demodulated_pilots(self):
        """Test the pilots come from a simulated capture of the calibration link."""
        with patch(
            "isaqn_sim.spm_sensing.simulate_capture", wraps=simulate_capture
        ) as simulate:
            precision_check(10.0, 2000, seed=6)

        calibration = simulate.call_args.args[0]
        assert [node.fiber_length_m for node in calibration.nodes] == [0.0]
        assert calibration.detector.quantum_efficiency == 1.0
        assert calibration.frame.pilot_amplitude == 10.0
        assert simulate.call_args.kwargs == {"vibrations": False}

    def test_needs_enough_trials(self):
        """Test fewer than 1000 trials are refused."""
        with pytest.raises(InvalidArgumentError, match="1000"):
            precision_check(10.0, 999, seed=0)


class TestSpectrumMonitor:
    """Test castdown and splitting detection."""

    def test_baseline_required(self, small_capture):
        """Test monitoring refuses to run without a baseline."""
        with pytest.raises(BaselineRequiredError):
            spectrum_monitor(small_capture.detected, small_capture.registry, None)
        with pytest.raises(BaselineRequiredError, match=r"\[3\]"):
            spectrum_monitor(
                small_capture.detected, small_capture.registry, {1: 1.0, 2: 1.0}
            )

    def test_band_power(self, small_capture):
        """Test every registered band carries power above the floor."""
        powers = measure_band_power(small_capture.detected, small_capture.registry)

        assert sorted(powers) == [1, 2, 3]
        assert all(power > 0 for power in powers.values())

    def test_band_mask_follows_rolloff(self, small_capture):
        """Test band power integrates over the RRC-occupied width of each band."""
        with patch(
            "isaqn_sim.spm_sensing.occupied_half_width", wraps=occupied_half_width
        ) as half_width:
            measure_band_power(small_capture.detected, small_capture.registry)

        assert [c.args for c in half_width.call_args_list] == [(50e3,)] * 3

    def test_no_false_alarms_without_vibration(self, small_3node):
        """Test 100 vibration-free captures never flag a band."""
        quiet = replace(small_3node, n_symbols=5000)
        baseline = capture_baseline(quiet, seed=0)

        flagged = []
        for seed in range(1, 101):
            capture = simulate_capture(quiet, seed)
            statuses = spectrum_monitor(
                capture.detected,
                capture.registry,
                baseline,
                pilot_spacing=quiet.frame.pilot_spacing,
            )
            flagged.extend((seed, s.node_id) for s in statuses if s.vibrating)

        assert flagged == []

    def test_quiet_capture(self, small_capture, small_3node):
        """Test a capture compared with itself shows no vibration."""
        baseline = measure_band_power(small_capture.detected, small_capture.registry)

        statuses = spectrum_monitor(
            small_capture.detected,
            small_capture.registry,
            baseline,
            pilot_spacing=small_3node.frame.pilot_spacing,
        )

        assert [s.node_id for s in statuses] == [1, 2, 3]
        assert not any(s.vibrating for s in statuses)
        assert all(s.in_band_power_db == pytest.approx(0.0) for s in statuses)

    def test_flags_only_vibrating_band(self, vibrating_scenario, vibrating_capture):
        """Test only the vibrating node's band shows a signature."""
        baseline = capture_baseline(vibrating_scenario, seed=11)

        statuses = spectrum_monitor(
            vibrating_capture.detected,
            vibrating_capture.registry,
            baseline,
            pilot_spacing=vibrating_scenario.frame.pilot_spacing,
        )

        by_node = {s.node_id: s for s in statuses}
        assert by_node[2].splitting
        assert any(abs(f - 500.0) < 50.0 for f in by_node[2].splitting_sidebands_hz)
        assert by_node[2].castdown
        assert by_node[2].in_band_power_db < -3.0
        assert not by_node[1].vibrating
        assert not by_node[3].vibrating


def _pilot_truth(capture, node_id):
    """Applied vibration phase sampled at the pilot slots."""
    sps = round(capture.sample_rate / capture.symbol_rate)
    positions = np.flatnonzero(
        capture.layout.slot_kinds(len(capture.detected) // sps) == SlotKind.PILOT
    )
    return capture.truth[node_id].vibration_phase[positions * sps]


class TestRunSpm:
    """Test the sensing pipeline end to end."""

    def test_recovers_vibration(self, vibrating_scenario, vibrating_capture):
        """Test node 2's trace follows the applied vibration."""
        reports = run_spm(vibrating_scenario, seed=11, capture=vibrating_capture)

        assert all(isinstance(r, SensingReport) for r in reports)
        report = {r.node_id: r for r in reports}[2]

        recovered = report.trace.unwrapped_phase_rad
        truth = _pilot_truth(vibrating_capture, 2)
        assert np.corrcoef(recovered, truth)[0, 1] > 0.99
        assert report.status.vibrating
        assert report.qkd_suspended
        assert any(abs(tone - 500.0) < 5.0 for tone in report.psd.tones_hz)

    @pytest.mark.parametrize(
        ("frequency_hz", "amplitude_v"),
        [(1.0, 0.2), (50.0, 0.1), (500.0, 0.034), (2000.0, 0.017)],
    )
    def test_recovers_pzt_tones(self, vibrating_scenario, frequency_hz, amplitude_v):
        """Test PZT-driven tones across the pilot band are recovered."""
        waveform = VibrationWaveform(frequency_hz=frequency_hz, amplitude_v=amplitude_v)
        scenario = replace(
            vibrating_scenario,
            vibration_events=(VibrationEvent(waveform=waveform, nodes=(2,)),),
        )
        capture = simulate_capture(scenario, seed=11)

        reports = run_spm(scenario, seed=11, capture=capture)

        report = {r.node_id: r for r in reports}[2]
        recovered = report.trace.unwrapped_phase_rad
        assert np.corrcoef(recovered, _pilot_truth(capture, 2))[0, 1] > 0.99

    def test_phase_floor_at_shot_noise(self, vibrating_scenario):
        """Test a quiet node's phase PSD floor sits at the pilot shot-noise level."""
        scenario = replace(vibrating_scenario, n_symbols=60_000, vibration_events=())
        det = scenario.detector
        node = scenario.node(1)

        reports = run_spm(scenario, seed=12)

        report = {r.node_id: r for r in reports}[1]
        gain = det.quantum_efficiency * transmittance(
            node.fiber_length_m, scenario.fiber, scenario.network_capacity
        )
        noise = 1 + det.electronic_noise_snu + gain * node.excess_noise_snu / 2
        variance = noise / (scenario.frame.pilot_amplitude**2 * gain)
        predicted = 2 * variance / report.trace.sample_rate
        assert abs(10 * math.log10(report.psd.floor_rad2_per_hz / predicted)) <= 3.0

    def test_quiet_nodes_keep_qkd(self, vibrating_scenario, vibrating_capture):
        """Test nodes without vibration are not suspended."""
        reports = run_spm(vibrating_scenario, seed=11, capture=vibrating_capture)

        quiet = [r for r in reports if r.node_id != 2]
        assert [r.node_id for r in quiet] == [1, 3]
        assert not any(r.qkd_suspended for r in quiet)
        assert all(r.trace.max_phase_rad < 0.5 for r in quiet)
