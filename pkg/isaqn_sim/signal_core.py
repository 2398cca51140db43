"""Shared numeric types, symbol sources, framing and SNU calibration."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np
from scipy import fft

from .const import (
    DEFAULT_PILOT_AMPLITUDE_SNU,
    DEFAULT_PILOT_PERIOD,
    DEFAULT_SYMBOLS_PER_FRAME,
    DEFAULT_SYNC_LENGTH,
    RRC_ROLLOFF,
    SYNC_WORD_SEED,
)
from .exceptions import InsufficientDataError, InvalidArgumentError

_LOGGER = logging.getLogger(__name__)


class SlotKind(IntEnum):
    """Role of a symbol slot inside a frame."""

    SYNC = 0
    PILOT = 1
    QUANTUM = 2


@dataclass(frozen=True, eq=False)
class ComplexWaveform:
    """Uniformly sampled complex baseband signal."""

    samples: np.ndarray
    sample_rate: float
    snu_scale: float = 1.0

    def __post_init__(self) -> None:
        """Validate the waveform."""
        samples = np.asarray(self.samples, dtype=np.complex128)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise InvalidArgumentError("Waveform must be a non-empty 1-D sequence")
        if not self.sample_rate > 0:
            raise InvalidArgumentError(
                f"Sample rate must be positive, got {self.sample_rate}"
            )
        if not self.snu_scale > 0:
            raise InvalidArgumentError(
                f"SNU scale must be positive, got {self.snu_scale}"
            )

    def __len__(self) -> int:
        """Return the number of samples."""
        return self.samples.size

    @property
    def time(self) -> np.ndarray:
        """Sample instants in seconds."""
        return np.arange(self.samples.size) / self.sample_rate

    @property
    def power(self) -> float:
        """Mean sample power in raw units."""
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray) -> ComplexWaveform:
        """Return a copy carrying new samples and the same calibration."""
        return ComplexWaveform(samples, self.sample_rate, self.snu_scale)


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    """Gaussian-modulated quadrature pairs in SNU."""

    x: np.ndarray
    p: np.ndarray
    variance: float

    def __post_init__(self) -> None:
        """Validate quadrature lengths."""
        x = np.asarray(self.x, dtype=np.float64)
        p = np.asarray(self.p, dtype=np.float64)
        if x.shape != p.shape or x.ndim != 1:
            raise InvalidArgumentError(
                f"Quadratures must have equal length, got {x.size} and {p.size}"
            )
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    def __len__(self) -> int:
        """Return the number of symbols."""
        return self.x.size

    @property
    def complex(self) -> np.ndarray:
        """Symbols as x + jp."""
        return self.x + 1j * self.p


def default_sync_word(length: int = DEFAULT_SYNC_LENGTH) -> np.ndarray:
    """Return the fixed unit-magnitude QPSK sync pattern."""
    rng = np.random.default_rng(SYNC_WORD_SEED)
    bits = rng.integers(0, 2, size=(length, 2))
    return ((2 * bits[:, 0] - 1) + 1j * (2 * bits[:, 1] - 1)) / math.sqrt(2)


@dataclass(frozen=True, eq=False)
class FrameLayout:
    """TDM layout of sync word, pilots and quantum symbols."""

    pilot_period: int = DEFAULT_PILOT_PERIOD
    pilot_amplitude: float = DEFAULT_PILOT_AMPLITUDE_SNU
    sync_word: np.ndarray = field(default_factory=default_sync_word)
    symbols_per_frame: int = DEFAULT_SYMBOLS_PER_FRAME

    def __post_init__(self) -> None:
        """Validate the layout."""
        sync_word = np.asarray(self.sync_word, dtype=np.complex128)
        object.__setattr__(self, "sync_word", sync_word)
        if self.pilot_period < 2:  # noqa: PLR2004
            raise InvalidArgumentError(
                f"Pilot period must be at least 2, got {self.pilot_period}"
            )
        if not self.pilot_amplitude > 0:
            raise InvalidArgumentError(
                f"Pilot amplitude must be positive, got {self.pilot_amplitude}"
            )
        if sync_word.size >= self.symbols_per_frame:
            raise InvalidArgumentError(
                f"Sync word ({sync_word.size}) must be shorter than the frame "
                f"({self.symbols_per_frame})"
            )

    @property
    def sync_symbols(self) -> np.ndarray:
        """Sync word scaled to pilot amplitude."""
        return self.pilot_amplitude * self.sync_word

    @property
    def pilot_spacing(self) -> int:
        """Symbols from one pilot to the next."""
        return self.pilot_period + 1

    def payload_length(self, n_quantum: int) -> int:
        """Payload slots needed to carry n_quantum symbols."""
        return n_quantum + math.ceil(n_quantum / self.pilot_period)

    def slot_kinds(self, total_length: int) -> np.ndarray:
        """Slot roles for a frame of total_length symbols starting at the sync word."""
        sync_len = self.sync_word.size
        if total_length <= sync_len:
            raise InvalidArgumentError(
                f"Frame of {total_length} symbols has no payload after the sync word"
            )
        kinds = np.full(total_length, SlotKind.QUANTUM, dtype=np.int8)
        kinds[:sync_len] = SlotKind.SYNC
        kinds[sync_len :: self.pilot_spacing] = SlotKind.PILOT
        return kinds


@dataclass(frozen=True, eq=False)
class QuadratureFrame:
    """Framed symbol stream with a slot map."""

    x: np.ndarray
    p: np.ndarray
    kinds: np.ndarray
    layout: FrameLayout
    variance: float

    def __len__(self) -> int:
        """Return the total number of slots."""
        return self.x.size

    @property
    def complex(self) -> np.ndarray:
        """Framed symbols as x + jp."""
        return self.x + 1j * self.p

    @property
    def pilot_positions(self) -> np.ndarray:
        """Indices of pilot slots."""
        return np.flatnonzero(self.kinds == SlotKind.PILOT)

    @property
    def quantum_positions(self) -> np.ndarray:
        """Indices of quantum slots."""
        return np.flatnonzero(self.kinds == SlotKind.QUANTUM)

    def scaled(self, factor: float) -> QuadratureFrame:
        """Return the frame with every symbol multiplied by factor."""
        return QuadratureFrame(
            self.x * factor, self.p * factor, self.kinds, self.layout, self.variance
        )


def gaussian_symbols(n: int, variance: float, seed: int) -> SymbolSequence:
    """Draw n GMCS symbols with Var(x) = Var(p) = variance / 2."""
    if n < 1:
        raise InvalidArgumentError(f"Symbol count must be at least 1, got {n}")
    if not variance > 0:
        raise InvalidArgumentError(f"Variance must be positive, got {variance}")

    rng = np.random.default_rng(seed)
    sigma = math.sqrt(variance / 2)
    x = rng.normal(0.0, sigma, n)
    p = rng.normal(0.0, sigma, n)
    _LOGGER.debug("Drew %s symbols with V_A=%s (seed %s)", n, variance, seed)
    return SymbolSequence(x, p, variance)


def build_frame(symbols: SymbolSequence, layout: FrameLayout) -> QuadratureFrame:
    """Prepend the sync word and put a pilot before every pilot_period symbols."""
    n = len(symbols)
    if n == 0:
        raise InvalidArgumentError("Cannot frame an empty symbol sequence")

    sync_len = layout.sync_word.size
    total = sync_len + layout.payload_length(n)
    kinds = layout.slot_kinds(total)

    x = np.zeros(total)
    p = np.zeros(total)
    sync = layout.sync_symbols
    x[:sync_len] = sync.real
    p[:sync_len] = sync.imag
    # Pilot state is x = amplitude, p = 0
    x[kinds == SlotKind.PILOT] = layout.pilot_amplitude
    quantum = kinds == SlotKind.QUANTUM
    x[quantum] = symbols.x
    p[quantum] = symbols.p
    return QuadratureFrame(x, p, kinds, layout, symbols.variance)


def deframe(frame: QuadratureFrame) -> SymbolSequence:
    """Recover the quantum symbols carried by a frame."""
    quantum = frame.kinds == SlotKind.QUANTUM
    return SymbolSequence(frame.x[quantum], frame.p[quantum], frame.variance)


def occupied_half_width(bandwidth_hz: float, rolloff: float = RRC_ROLLOFF) -> float:
    """Half width of an RRC-shaped band around its carrier."""
    return (1 + rolloff) * bandwidth_hz / 2


def raised_cosine_spectrum(
    freqs: np.ndarray, rolloff: float = RRC_ROLLOFF
) -> np.ndarray:
    """Raised-cosine spectrum with unit in-band gain, freqs in units of symbol rate."""
    f = np.abs(freqs)
    lower = (1 - rolloff) / 2
    upper = (1 + rolloff) / 2
    spectrum = np.zeros_like(f)
    spectrum[f <= lower] = 1.0
    edge = (f > lower) & (f <= upper)
    spectrum[edge] = 0.5 * (1 + np.cos(np.pi / rolloff * (f[edge] - lower)))
    return spectrum


def rrc_response(n_samples: int, samples_per_symbol: int) -> np.ndarray:
    """Zero-phase root-raised-cosine response with unit DC gain."""
    freqs = fft.fftfreq(n_samples, d=1.0 / samples_per_symbol)
    return np.sqrt(raised_cosine_spectrum(freqs))


def shape_pulses(symbols: np.ndarray, samples_per_symbol: int) -> np.ndarray:
    """
    Upsample complex symbols and apply the RRC transmit filter.

    A run of equal symbols maps to samples of that value.
    """
    n = symbols.size * samples_per_symbol
    impulses = np.zeros(n, dtype=np.complex128)
    impulses[::samples_per_symbol] = symbols
    response = samples_per_symbol * rrc_response(n, samples_per_symbol)
    return fft.ifft(fft.fft(impulses) * response)


def matched_filter(samples: np.ndarray, samples_per_symbol: int) -> np.ndarray:
    """Apply the RRC receive filter and decimate at symbol centers."""
    n = samples.size - samples.size % samples_per_symbol
    filtered = fft.ifft(fft.fft(samples[:n]) * rrc_response(n, samples_per_symbol))
    return filtered[::samples_per_symbol]


def samples_per_symbol(sample_rate: float, symbol_rate: float) -> int:
    """Integer oversampling factor, rejecting non-integer ratios."""
    ratio = sample_rate / symbol_rate
    sps = round(ratio)
    if sps < 1 or not math.isclose(ratio, sps, rel_tol=1e-9):
        raise InvalidArgumentError(
            f"Sample rate {sample_rate} must be an integer multiple of "
            f"symbol rate {symbol_rate}"
        )
    return sps


def snu_calibrate(
    noise_only: ComplexWaveform,
    matched_filter_len: int,
    electronic_noise_snu: float = 0.0,
) -> float:
    """Return the raw per-quadrature variance of one vacuum unit."""
    if matched_filter_len < 1:
        raise InvalidArgumentError(
            f"Matched filter length must be at least 1, got {matched_filter_len}"
        )
    if len(noise_only) < 100 * matched_filter_len:
        raise InsufficientDataError(
            f"Calibration needs at least {100 * matched_filter_len} samples, "
            f"got {len(noise_only)}"
        )

    quadratures = matched_filter(noise_only.samples, matched_filter_len)
    # The receive filter passes 1/matched_filter_len of white noise power
    variance = 0.5 * (np.var(quadratures.real) + np.var(quadratures.imag))
    snu_scale = float(variance * matched_filter_len / (1.0 + electronic_noise_snu))
    _LOGGER.debug(
        "Calibrated SNU scale %.6g from %s symbols", snu_scale, quadratures.size
    )
    return snu_scale
