"""Test the fiber channel model."""

import math

import numpy as np
import pytest

from isaqn_sim.exceptions import InvalidArgumentError
from isaqn_sim.fiber_channel import (
    ChannelState,
    FiberConstants,
    HysteresisCurve,
    PztParams,
    combine,
    length_to_phase,
    propagate,
    pzt_length,
    pzt_phase,
    transmittance,
)
from isaqn_sim.signal_core import ComplexWaveform


class TestFiberConstants:
    """Test the photoelastic constants."""

    def test_k_fiber(self, fiber):
        """Test the photoelastic factor for fused silica."""
        assert fiber.k_fiber == pytest.approx(1.146, abs=1e-3)

    def test_two_pi_length(self, fiber):
        """Test a 2 pi phase corresponds to lambda / K of stretch."""
        assert 2 * math.pi / fiber.phase_per_meter == pytest.approx(1.353e-6, rel=1e-3)

    @pytest.mark.parametrize(
        "kwargs", [{"refractive_index": 2.5}, {"poisson_ratio": 0.6}, {"p11": 0.0}]
    )
    def test_validation(self, kwargs):
        """Test out-of-range constants are rejected."""
        with pytest.raises(InvalidArgumentError):
            FiberConstants(**kwargs)


class TestTransmittance:
    """Test fiber loss and splitter division."""

    def test_paper_feeder(self, fiber):
        """Test 10 km at 0.2 dB/km behind a 1:8 splitter."""
        assert transmittance(10_000, fiber, 8) == pytest.approx(0.0789, abs=1e-4)

    def test_zero_length(self, fiber):
        """Test a zero-length fiber with no splitter is lossless."""
        assert transmittance(0.0, fiber) == 1.0

    def test_validation(self, fiber):
        """Test negative lengths and zero splits are rejected."""
        with pytest.raises(InvalidArgumentError, match="non-negative"):
            transmittance(-1.0, fiber)
        with pytest.raises(InvalidArgumentError, match="Splitter"):
            transmittance(10.0, fiber, 0)


class TestPzt:
    """Test the PZT drive model."""

    def test_ten_volts(self, fiber):
        """Test 10 V on the default ring yields about 891 rad."""
        phase = pzt_phase(np.array([10.0]), PztParams(), fiber)

        assert phase[0] == pytest.approx(891.2, abs=0.5)

    def test_linear_in_length(self, fiber):
        """Test phase is exactly proportional to stretch."""
        lengths = np.linspace(-1e-6, 1e-6, 11)
        phases = length_to_phase(lengths, fiber)

        np.testing.assert_allclose(phases, lengths * fiber.phase_per_meter)

    def test_hysteresis_branches(self):
        """Test rising and falling drive follow their own tables."""
        curve = HysteresisCurve(
            rising_voltage=np.array([0.0, 10.0]),
            rising_length_m=np.array([0.0, 1e-6]),
            falling_voltage=np.array([0.0, 10.0]),
            falling_length_m=np.array([0.0, 2e-6]),
        )
        pzt = PztParams(hysteresis=curve)
        voltage = np.array([0.0, 5.0, 10.0, 5.0, 0.0])

        lengths = pzt_length(voltage, pzt)

        assert lengths[1] == pytest.approx(0.5e-6)
        assert lengths[3] == pytest.approx(1e-6)

    def test_hysteresis_table(self, tmp_path):
        """Test a two-column table loads as the rising branch."""
        table = tmp_path / "pzt.csv"
        table.write_text("voltage,length\n10,2e-6\n0,0\n5,1.2e-6\n", encoding="utf-8")

        curve = HysteresisCurve.from_table(str(table))

        np.testing.assert_allclose(curve.rising_voltage, [0, 5, 10])
        assert curve.length(np.array([5.0]))[0] == pytest.approx(1.2e-6)

    def test_rejects_non_finite_voltage(self):
        """Test NaN drive voltages are rejected."""
        with pytest.raises(InvalidArgumentError, match="finite"):
            pzt_length(np.array([0.0, np.nan]), PztParams())


class TestPropagate:
    """Test per-node propagation."""

    def _waveform(self, n=4096):
        rng = np.random.default_rng(0)
        samples = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        return ComplexWaveform(samples, 1e6)

    def test_loss_and_static_phase(self):
        """Test the output is the input scaled by sqrt(T) and rotated."""
        waveform = self._waveform()
        state = ChannelState(transmittance=0.25, static_phase_rad=0.7)

        out = propagate(waveform, state)

        np.testing.assert_allclose(
            out.samples, 0.5 * np.exp(0.7j) * waveform.samples, atol=1e-12
        )

    def test_vibration_phase(self):
        """Test a vibration phase series rotates each sample."""
        waveform = self._waveform()
        vibration = np.linspace(0.0, 3.0, len(waveform))

        out = propagate(waveform, ChannelState(vibration_phase=vibration))

        np.testing.assert_allclose(
            out.samples, waveform.samples * np.exp(1j * vibration), atol=1e-12
        )

    def test_castdown_only_while_active(self):
        """Test the castdown dip applies only where the phase moves fast."""
        n = 10_000
        waveform = ComplexWaveform(np.ones(n), 1e4)
        vibration = np.zeros(n)
        vibration[n // 2 :] = np.linspace(0.0, 100.0, n - n // 2)
        state = ChannelState(vibration_phase=vibration, castdown_db=6.0)

        out = propagate(waveform, state)

        assert np.abs(out.samples[100]) == pytest.approx(1.0)
        assert np.abs(out.samples[-100]) == pytest.approx(10 ** (-6 / 20))

    def test_excess_noise_variance(self):
        """Test excess noise adds eps / 2 per quadrature before loss."""
        n = 200_000
        waveform = ComplexWaveform(np.zeros(n), 1e6, snu_scale=2.0)
        state = ChannelState(excess_noise_snu=0.4, transmittance=0.5, seed=3)

        out = propagate(waveform, state)

        assert np.var(out.samples.real) == pytest.approx(0.5 * 0.2 * 2.0, rel=0.02)

    def test_vibration_length_mismatch(self):
        """Test a vibration series of the wrong length is rejected."""
        state = ChannelState(vibration_phase=np.zeros(10))

        with pytest.raises(InvalidArgumentError, match="Vibration"):
            propagate(self._waveform(), state)

    def test_vibration_resampled(self):
        """Test a coarser vibration series is interpolated onto the waveform."""
        waveform = ComplexWaveform(np.ones(1000), 1000.0)
        coarse = np.linspace(0.0, 1.0, 101)
        state = ChannelState(vibration_phase=coarse, vibration_rate=100.0)

        out = propagate(waveform, state)

        assert np.angle(out.samples[500]) == pytest.approx(0.5, abs=1e-9)

    def test_state_validation(self):
        """Test transmittance outside (0, 1] is rejected."""
        with pytest.raises(InvalidArgumentError, match="Transmittance"):
            ChannelState(transmittance=0.0)


class TestCombine:
    """Test the center-node splitter."""

    def test_sums_waveforms(self):
        """Test combining adds samples."""
        a = ComplexWaveform(np.ones(8), 1e3)
        b = ComplexWaveform(2j * np.ones(8), 1e3)

        np.testing.assert_allclose(combine([a, b]).samples, 1 + 2j)

    def test_mismatch(self):
        """Test waveforms must agree on rate and length."""
        a = ComplexWaveform(np.ones(8), 1e3)

        with pytest.raises(InvalidArgumentError, match="Sample rates"):
            combine([a, ComplexWaveform(np.ones(8), 2e3)])
        with pytest.raises(InvalidArgumentError, match="lengths"):
            combine([a, ComplexWaveform(np.ones(9), 1e3)])
        with pytest.raises(InvalidArgumentError):
            combine([])
