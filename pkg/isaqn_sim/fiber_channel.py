"""Fiber channel model: loss, static and vibration phase, castdown and excess noise."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import fft

from .const import (
    DEFAULT_ACTIVITY_THRESHOLD_RAD_S,
    DEFAULT_ATTENUATION_DB_PER_KM,
    DEFAULT_FIBER_LIGHT_SPEED_MPS,
    DEFAULT_P11,
    DEFAULT_P12,
    DEFAULT_POISSON_RATIO,
    DEFAULT_PZT_D_COEFF,
    DEFAULT_PZT_OUTER_RADIUS_M,
    DEFAULT_PZT_THICKNESS_M,
    DEFAULT_PZT_WOUND_FIBER_M,
    DEFAULT_REFRACTIVE_INDEX,
    DEFAULT_WAVELENGTH_M,
)
from .exceptions import InvalidArgumentError
from .signal_core import ComplexWaveform

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class FiberConstants:
    """Optical and mechanical constants of the fiber."""

    wavelength_m: float = DEFAULT_WAVELENGTH_M
    refractive_index: float = DEFAULT_REFRACTIVE_INDEX
    poisson_ratio: float = DEFAULT_POISSON_RATIO
    p11: float = DEFAULT_P11
    p12: float = DEFAULT_P12
    attenuation_db_per_km: float = DEFAULT_ATTENUATION_DB_PER_KM
    light_speed_fiber_mps: float = DEFAULT_FIBER_LIGHT_SPEED_MPS

    def __post_init__(self) -> None:
        """Validate the constants."""
        for name in (
            "wavelength_m",
            "p11",
            "p12",
            "attenuation_db_per_km",
            "light_speed_fiber_mps",
        ):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {value}")
        if not 1 < self.refractive_index < 2:  # noqa: PLR2004
            raise InvalidArgumentError(
                f"Refractive index must be in (1, 2), got {self.refractive_index}"
            )
        if not 0 < self.poisson_ratio < 0.5:  # noqa: PLR2004
            raise InvalidArgumentError(
                f"Poisson ratio must be in (0, 0.5), got {self.poisson_ratio}"
            )

    @property
    def k_fiber(self) -> float:
        """Photoelastic phase factor n - n^3/2 [(1 - mu) p12 - mu p11]."""
        n = self.refractive_index
        mu = self.poisson_ratio
        return n - 0.5 * n**3 * ((1 - mu) * self.p12 - mu * self.p11)

    @property
    def phase_per_meter(self) -> float:
        """Optical phase change per meter of fiber stretch."""
        return 2 * math.pi / self.wavelength_m * self.k_fiber


@dataclass(frozen=True, eq=False)
class HysteresisCurve:
    """Open-loop PZT voltage to length tables for rising and falling drive."""

    rising_voltage: np.ndarray
    rising_length_m: np.ndarray
    falling_voltage: np.ndarray | None = None
    falling_length_m: np.ndarray | None = None

    def __post_init__(self) -> None:
        """Validate the tables."""
        for voltage, length in (
            (self.rising_voltage, self.rising_length_m),
            (self.falling_voltage, self.falling_length_m),
        ):
            if voltage is None and length is None:
                continue
            if voltage is None or length is None or len(voltage) != len(length):
                raise InvalidArgumentError("Hysteresis branch needs paired columns")
            if len(voltage) < 2 or np.any(np.diff(voltage) <= 0):  # noqa: PLR2004
                raise InvalidArgumentError(
                    "Hysteresis voltages must be strictly increasing"
                )

    @classmethod
    def from_table(cls, path: str) -> HysteresisCurve:
        """Load a two-column (voltage, length) numeric table."""
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        order = np.argsort(table[:, 0])
        return cls(table[order, 0], table[order, 1])

    def length(self, voltage: np.ndarray) -> np.ndarray:
        """Map a voltage series to length change, choosing the branch by dV/dt."""
        rising = np.interp(voltage, self.rising_voltage, self.rising_length_m)
        if self.falling_voltage is None or voltage.size < 2:  # noqa: PLR2004
            return rising
        falling = np.interp(voltage, self.falling_voltage, self.falling_length_m)
        return np.where(np.gradient(voltage) >= 0, rising, falling)


@dataclass(frozen=True, eq=False)
class PztParams:
    """Ring piezoelectric transducer with wound fiber."""

    d_coeff: float = DEFAULT_PZT_D_COEFF
    outer_radius_m: float = DEFAULT_PZT_OUTER_RADIUS_M
    thickness_m: float = DEFAULT_PZT_THICKNESS_M
    wound_fiber_m: float = DEFAULT_PZT_WOUND_FIBER_M
    hysteresis: HysteresisCurve | None = None

    def __post_init__(self) -> None:
        """Validate the geometry."""
        for name in ("d_coeff", "outer_radius_m", "thickness_m", "wound_fiber_m"):
            value = getattr(self, name)
            if not value > 0:
                raise InvalidArgumentError(f"{name} must be positive, got {value}")

    @property
    def length_per_volt(self) -> float:
        """Fiber stretch per volt, d * pi * r / t."""
        return self.d_coeff * math.pi * self.outer_radius_m / self.thickness_m


@dataclass(frozen=True, eq=False)
class ChannelState:
    """Per-node quantum channel state."""

    transmittance: float = 1.0
    static_phase_rad: float = 0.0
    vibration_phase: np.ndarray | None = None
    vibration_rate: float | None = None
    excess_noise_snu: float = 0.0
    castdown_db: float = 0.0
    activity_threshold_rad_s: float = DEFAULT_ACTIVITY_THRESHOLD_RAD_S
    noise_band: tuple[float, float] | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        """Validate the state."""
        if not 0 < self.transmittance <= 1:
            raise InvalidArgumentError(
                f"Transmittance must be in (0, 1], got {self.transmittance}"
            )
        if self.excess_noise_snu < 0:
            raise InvalidArgumentError(
                f"Excess noise must be non-negative, got {self.excess_noise_snu}"
            )
        if self.castdown_db < 0:
            raise InvalidArgumentError(
                f"Castdown depth must be non-negative, got {self.castdown_db}"
            )


def transmittance(length_m: float, fiber: FiberConstants, n_split: int = 1) -> float:
    """Return-path transmittance 10^(-alpha L / 10) / N."""
    if length_m < 0:
        raise InvalidArgumentError(f"Fiber length must be non-negative, got {length_m}")
    if n_split < 1:
        raise InvalidArgumentError(f"Splitter ratio must be at least 1, got {n_split}")
    return 10 ** (-fiber.attenuation_db_per_km * length_m / 1e3 / 10) / n_split


def pzt_length(voltage: np.ndarray, pzt: PztParams) -> np.ndarray:
    """Fiber length change produced by a PZT drive voltage."""
    voltage = np.asarray(voltage, dtype=np.float64)
    if not np.all(np.isfinite(voltage)):
        raise InvalidArgumentError("PZT voltage must be finite")
    if pzt.hysteresis is not None:
        return pzt.hysteresis.length(voltage)
    return voltage * pzt.length_per_volt


def length_to_phase(length_m: np.ndarray, fiber: FiberConstants) -> np.ndarray:
    """Optical phase change of a fiber stretched by length_m."""
    return np.asarray(length_m, dtype=np.float64) * fiber.phase_per_meter


def pzt_phase(
    voltage: np.ndarray, pzt: PztParams, fiber: FiberConstants
) -> np.ndarray:
    """Phase change induced by a PZT drive voltage series."""
    return length_to_phase(pzt_length(voltage, pzt), fiber)


def _vibration_on_grid(state: ChannelState, waveform: ComplexWaveform) -> np.ndarray:
    """Vibration phase sampled at the waveform instants."""
    n = len(waveform)
    if state.vibration_phase is None:
        return np.zeros(n)

    phase = np.asarray(state.vibration_phase, dtype=np.float64)
    if state.vibration_rate is None or math.isclose(
        state.vibration_rate, waveform.sample_rate
    ):
        if phase.size != n:
            raise InvalidArgumentError(
                f"Vibration phase has {phase.size} samples, waveform has {n}"
            )
        return phase

    source_time = np.arange(phase.size) / state.vibration_rate
    target_time = waveform.time
    if source_time[-1] + 1 / state.vibration_rate < target_time[-1]:
        raise InvalidArgumentError(
            f"Vibration phase covers {source_time[-1]:.6g} s, "
            f"waveform needs {target_time[-1]:.6g} s"
        )
    return np.interp(target_time, source_time, phase)


def _castdown_gain(phase: np.ndarray, state: ChannelState, rate: float) -> np.ndarray:
    """Amplitude factor of the Rayleigh-backscatter power dip."""
    if state.castdown_db == 0 or phase.size < 2:  # noqa: PLR2004
        return np.ones(phase.size)
    active = np.abs(np.gradient(phase) * rate) > state.activity_threshold_rad_s
    return np.where(active, 10 ** (-state.castdown_db / 20), 1.0)


def _excess_noise(
    state: ChannelState, waveform: ComplexWaveform, rng: np.random.Generator
) -> np.ndarray:
    """Input-referred complex noise carrying excess_noise_snu per quadrature pair."""
    n = len(waveform)
    sigma = math.sqrt(state.excess_noise_snu / 2 * waveform.snu_scale)
    noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    if state.noise_band is None:
        return noise
    # Confine to the node's band so combined channels do not share excess noise
    center, half_width = state.noise_band
    freqs = fft.fftfreq(n, d=1.0 / waveform.sample_rate)
    mask = np.abs(freqs - center) <= half_width
    return fft.ifft(fft.fft(noise) * mask)


def propagate(waveform: ComplexWaveform, state: ChannelState) -> ComplexWaveform:
    """Pass a node waveform through its fiber channel."""
    vibration = _vibration_on_grid(state, waveform)
    gain = _castdown_gain(vibration, state, waveform.sample_rate)
    rotated = waveform.samples * np.exp(1j * (state.static_phase_rad + vibration))
    optical = rotated * gain

    if state.excess_noise_snu > 0:
        rng = np.random.default_rng(state.seed)
        optical = optical + _excess_noise(state, waveform, rng)

    _LOGGER.debug(
        "Propagated %s samples: T=%.4g theta=%.4g eps=%.4g castdown=%.1f%%",
        len(waveform),
        state.transmittance,
        state.static_phase_rad,
        state.excess_noise_snu,
        100 * float(np.mean(gain < 1)),
    )
    return waveform.with_samples(math.sqrt(state.transmittance) * optical)


def combine(waveforms: list[ComplexWaveform]) -> ComplexWaveform:
    """Sum node waveforms at the center-node splitter."""
    if not waveforms:
        raise InvalidArgumentError("Nothing to combine")

    first = waveforms[0]
    for other in waveforms[1:]:
        if not math.isclose(other.sample_rate, first.sample_rate):
            raise InvalidArgumentError(
                f"Sample rates differ: {first.sample_rate} and {other.sample_rate}"
            )
        if len(other) != len(first):
            raise InvalidArgumentError(
                f"Waveform lengths differ: {len(first)} and {len(other)}"
            )
        if not math.isclose(other.snu_scale, first.snu_scale):
            raise InvalidArgumentError("Waveforms carry different SNU calibrations")

    total = np.sum([w.samples for w in waveforms], axis=0)
    return first.with_samples(total)
