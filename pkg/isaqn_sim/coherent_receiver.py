"""Center-node heterodyne detection, band selection, demodulation and frame sync."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import fft

from .const import (
    DEFAULT_ELECTRONIC_NOISE_SNU,
    DEFAULT_QUANTUM_EFFICIENCY,
    MIN_SYNC_PSR,
)
from .exceptions import (
    IllegalBandError,
    InsufficientDataError,
    InvalidArgumentError,
    SyncFailureError,
)
from .node_modulator import BandRegistry
from .signal_core import (
    ComplexWaveform,
    matched_filter,
    occupied_half_width,
    samples_per_symbol,
)

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectorParams:
    """Heterodyne detector imperfections."""

    quantum_efficiency: float = DEFAULT_QUANTUM_EFFICIENCY
    electronic_noise_snu: float = DEFAULT_ELECTRONIC_NOISE_SNU
    bandwidth_hz: float | None = None

    def __post_init__(self) -> None:
        """Validate the detector."""
        if not 0 < self.quantum_efficiency <= 1:
            raise InvalidArgumentError(
                f"Quantum efficiency must be in (0, 1], got {self.quantum_efficiency}"
            )
        if self.electronic_noise_snu < 0:
            raise InvalidArgumentError(
                "Electronic noise must be non-negative, "
                f"got {self.electronic_noise_snu}"
            )


@dataclass(frozen=True, eq=False)
class QuadratureStream:
    """Demodulated quadratures at the symbol rate, in SNU."""

    x: np.ndarray
    p: np.ndarray
    symbol_rate: float
    frame_offset: int | None = None

    def __post_init__(self) -> None:
        """Validate the stream."""
        x = np.asarray(self.x, dtype=np.float64)
        p = np.asarray(self.p, dtype=np.float64)
        if x.shape != p.shape or x.ndim != 1:
            raise InvalidArgumentError(
                f"Quadratures must have equal length, got {x.size} and {p.size}"
            )
        if not self.symbol_rate > 0:
            raise InvalidArgumentError(
                f"Symbol rate must be positive, got {self.symbol_rate}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    def __len__(self) -> int:
        """Return the number of symbols."""
        return self.x.size

    @property
    def complex(self) -> np.ndarray:
        """Quadratures as X + jP."""
        return self.x + 1j * self.p

    @classmethod
    def from_complex(
        cls, values: np.ndarray, symbol_rate: float, frame_offset: int | None = None
    ) -> QuadratureStream:
        """Build a stream from complex X + jP values."""
        return cls(values.real, values.imag, symbol_rate, frame_offset)

    def aligned(self) -> QuadratureStream:
        """Return the stream rotated so it starts at the frame, offset kept."""
        if self.frame_offset is None:
            raise InvalidArgumentError("Stream has no frame offset")
        return replace(
            self,
            x=np.roll(self.x, -self.frame_offset),
            p=np.roll(self.p, -self.frame_offset),
        )


@dataclass(frozen=True)
class SyncResult:
    """Frame synchronization outcome."""

    offset: int
    peak_to_sidelobe: float
    peak: float


def detect(
    waveform: ComplexWaveform, det: DetectorParams, seed: int
) -> ComplexWaveform:
    """Apply detector efficiency and add vacuum and electronic noise."""
    rng = np.random.default_rng(seed)
    n = len(waveform)
    scale = waveform.snu_scale

    vacuum = math.sqrt(scale) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    electronic = math.sqrt(det.electronic_noise_snu * scale) * (
        rng.standard_normal(n) + 1j * rng.standard_normal(n)
    )
    out = math.sqrt(det.quantum_efficiency) * waveform.samples + vacuum + electronic

    _LOGGER.debug(
        "Detected %s samples with eta=%s v_el=%s (seed %s)",
        n,
        det.quantum_efficiency,
        det.electronic_noise_snu,
        seed,
    )
    return waveform.with_samples(out)


def band_select(
    waveform: ComplexWaveform, registry: BandRegistry, node_id: int
) -> ComplexWaveform:
    """Isolate one registered band with a unit-gain band-pass filter."""
    if not registry.is_registered(node_id):
        raise IllegalBandError(f"Node {node_id} has no registered band")

    entry = registry.entries[node_id]
    half_width = occupied_half_width(entry.bandwidth_hz)
    freqs = fft.fftfreq(len(waveform), d=1.0 / waveform.sample_rate)
    passband = np.abs(freqs - entry.carrier_hz) <= half_width
    filtered = fft.ifft(fft.fft(waveform.samples) * passband)
    return waveform.with_samples(filtered)


def demodulate(
    waveform: ComplexWaveform, carrier_hz: float, baseband_hz: float
) -> QuadratureStream:
    """Mix a band down to baseband, matched-filter it and sample at symbol centers."""
    nyquist = waveform.sample_rate / 2
    if abs(carrier_hz) >= nyquist:
        raise InvalidArgumentError(
            f"Carrier {carrier_hz} Hz is outside the {nyquist} Hz Nyquist range"
        )
    if abs(carrier_hz) + occupied_half_width(baseband_hz) > nyquist:
        raise InvalidArgumentError(
            f"Baseband {baseband_hz} Hz around {carrier_hz} Hz exceeds the available "
            "bandwidth"
        )

    sps = samples_per_symbol(waveform.sample_rate, baseband_hz)
    mixed = waveform.samples * np.exp(-2j * np.pi * carrier_hz * waveform.time)
    symbols = matched_filter(mixed, sps) / math.sqrt(waveform.snu_scale / sps)
    return QuadratureStream.from_complex(symbols, baseband_hz)


def frame_sync(stream: QuadratureStream, sync_word: np.ndarray) -> SyncResult:
    """
    Locate the sync word by normalized circular cross-correlation.

    The correlation magnitude is used so the result does not depend on the
    channel phase. The peak-to-sidelobe ratio compares the peak against the
    largest correlation at lags that do not overlap the peak.
    """
    word = np.asarray(sync_word, dtype=np.complex128)
    n = len(stream)
    length = word.size
    if n < 2 * length:
        raise InsufficientDataError(
            f"Stream of {n} symbols is shorter than twice the sync word ({length})"
        )

    values = stream.complex
    padded = np.zeros(n, dtype=np.complex128)
    padded[:length] = word
    correlation = np.abs(fft.ifft(fft.fft(values) * np.conj(fft.fft(padded))))

    energy = np.abs(values) ** 2
    cumulative = np.concatenate(([0.0], np.cumsum(np.concatenate((energy, energy)))))
    window_energy = cumulative[length : length + n] - cumulative[:n]
    norm = np.linalg.norm(word) * np.sqrt(np.maximum(window_energy, 1e-300))
    normalized = correlation / norm

    offset = int(np.argmax(normalized))
    peak = float(normalized[offset])
    distance = np.abs(np.arange(n) - offset)
    distance = np.minimum(distance, n - distance)
    sidelobe = float(np.max(normalized[distance >= length]))
    psr = peak / sidelobe if sidelobe > 0 else math.inf

    if psr < MIN_SYNC_PSR:
        raise SyncFailureError(
            f"Sync peak-to-sidelobe ratio {psr:.2f} is below {MIN_SYNC_PSR}"
        )

    _LOGGER.debug("Frame sync at offset %s (peak %.3f, PSR %.2f)", offset, peak, psr)
    return SyncResult(offset, psr, peak)
