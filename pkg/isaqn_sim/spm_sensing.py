"""Spectrum phase monitoring: castdown/splitting detection and vibration recovery."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING, Any

import numpy as np
from scipy import signal

from .coherent_receiver import QuadratureStream, band_select, demodulate, frame_sync
from .const import (
    CALIBRATION_PILOT_PERIOD,
    CASTDOWN_THRESHOLD_DB,
    DEFAULT_PILOT_PERIOD,
    MIN_PRECISION_TRIALS,
    MONITOR_GUARD_BINS,
    MONITOR_SEGMENT,
    PSD_SEGMENT,
    PSD_TONE_GUARD_BINS,
    SPLITTING_THRESHOLD_DB,
    SUSPEND_PHASE_STEP_RAD,
)
from .event_localizer import NetworkGeometry
from .exceptions import (
    BaselineRequiredError,
    InsufficientDataError,
    InvalidArgumentError,
    IsaqnError,
)
from .fiber_channel import FiberConstants
from .network import Capture, NodeFailure, simulate_capture
from .node_modulator import NodeConfig
from .qkd_engine import pilot_samples
from .scenario import ScenarioConfig
from .signal_core import occupied_half_width

if TYPE_CHECKING:
    from .node_modulator import BandRegistry
    from .signal_core import ComplexWaveform, FrameLayout

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class BandStatus:
    """Spectrum monitor verdict for one band."""

    node_id: int
    in_band_power_db: float
    castdown: bool
    splitting: bool
    splitting_sidebands_hz: tuple[float, ...] = ()

    @property
    def vibrating(self) -> bool:
        """Whether the band shows any vibration signature."""
        return self.castdown or self.splitting

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping."""
        return {
            "node_id": self.node_id,
            "in_band_power_db": self.in_band_power_db,
            "castdown": self.castdown,
            "splitting": self.splitting,
            "splitting_sidebands_hz": list(self.splitting_sidebands_hz),
        }


@dataclass(frozen=True, eq=False)
class VibrationTrace:
    """Recovered vibration waveform of one node, sampled at the pilot rate."""

    time_s: np.ndarray
    unwrapped_phase_rad: np.ndarray
    length_change_m: np.ndarray
    sample_rate: float

    @property
    def max_phase_rad(self) -> float:
        """Peak phase excursion around the median phase."""
        phase = self.unwrapped_phase_rad
        return float(np.max(np.abs(phase - np.median(phase))))


@dataclass(frozen=True, eq=False)
class StrainPsd:
    """Welch PSD of a phase series and the strain resolution it implies."""

    freqs_hz: np.ndarray
    psd_rad2_per_hz: np.ndarray
    floor_rad2_per_hz: float
    strain_resolution_per_rthz: float
    tones_hz: tuple[float, ...] = ()


@dataclass(frozen=True)
class PrecisionReport:
    """Monte-Carlo pilot phase precision against the shot-noise limit."""

    photon_number: float
    measured_phase_std: float
    quantum_limit: float
    ratio: float
    quadrature_variance: tuple[float, float]
    length_std_m: float

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping."""
        return {
            "photon_number": self.photon_number,
            "measured_phase_std": self.measured_phase_std,
            "quantum_limit": self.quantum_limit,
            "ratio": self.ratio,
            "quadrature_variance": list(self.quadrature_variance),
            "length_std_m": self.length_std_m,
        }


@dataclass(frozen=True, eq=False)
class SensingReport:
    """Per-node sensing outcome."""

    node_id: int
    status: BandStatus
    trace: VibrationTrace
    psd: StrainPsd | None = None
    qkd_suspended: bool = False
    max_phase_step_rad: float = 0.0

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready summary; series are written as tables."""
        data = {
            "node_id": self.node_id,
            "status": self.status.to_dict(),
            "qkd_suspended": self.qkd_suspended,
            "max_phase_rad": self.trace.max_phase_rad,
            "max_phase_step_rad": self.max_phase_step_rad,
            "trace_sample_rate": self.trace.sample_rate,
            "trace_samples": int(self.trace.time_s.size),
        }
        if self.psd is not None:
            data["psd_floor_rad2_per_hz"] = self.psd.floor_rad2_per_hz
            data["strain_resolution_per_rthz"] = self.psd.strain_resolution_per_rthz
            data["tones_hz"] = list(self.psd.tones_hz)
        return data


def monitor_spectrum(detected: ComplexWaveform) -> tuple[np.ndarray, np.ndarray]:
    """Two-sided Welch PSD of the capture, ordered by frequency."""
    n = len(detected)
    if n < 16:  # noqa: PLR2004
        raise InsufficientDataError(f"Capture of {n} samples is too short to monitor")
    nperseg = min(MONITOR_SEGMENT, 2 ** int(math.log2(n // 4)))
    freqs, psd = signal.welch(
        detected.samples,
        fs=detected.sample_rate,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    order = np.argsort(freqs)
    return freqs[order], psd[order]


def _band_masks(
    freqs: np.ndarray, registry: BandRegistry
) -> tuple[dict[int, np.ndarray], np.ndarray]:
    """In-band masks per node and the union of occupied bins."""
    masks = {}
    occupied = np.zeros(freqs.size, dtype=bool)
    for node_id in registry.registered_ids():
        entry = registry.entries[node_id]
        half_width = occupied_half_width(entry.bandwidth_hz)
        masks[node_id] = np.abs(freqs - entry.carrier_hz) <= half_width
        occupied |= masks[node_id]
    return masks, occupied


def _floor(psd: np.ndarray, occupied: np.ndarray) -> float:
    free = psd[~occupied]
    if free.size == 0:
        raise InsufficientDataError("No spectrum outside the occupied bands")
    return float(np.median(free))


def measure_band_power(
    detected: ComplexWaveform, registry: BandRegistry
) -> dict[int, float]:
    """Floor-subtracted in-band power per registered node."""
    freqs, psd = monitor_spectrum(detected)
    masks, occupied = _band_masks(freqs, registry)
    floor = _floor(psd, occupied)
    df = freqs[1] - freqs[0]
    return {
        node_id: float(np.sum(psd[mask] - floor) * df)
        for node_id, mask in masks.items()
    }


def _sidebands(  # noqa: PLR0913
    freqs: np.ndarray,
    psd: np.ndarray,
    carrier_hz: float,
    search_hz: float,
    floor: float,
    threshold_db: float,
) -> tuple[float, ...]:
    """Offsets of symmetric sideband pairs around the pilot line."""
    df = freqs[1] - freqs[0]
    center = int(np.argmin(np.abs(freqs - carrier_hz)))
    reach = int(search_hz / df)
    limit = floor * 10 ** (threshold_db / 10)

    offsets = []
    for m in range(MONITOR_GUARD_BINS + 1, reach + 1):
        upper, lower = center + m, center - m
        if lower - 1 < 0 or upper + 1 >= psd.size:
            break
        up = psd[upper]
        is_peak = up > limit and up >= psd[upper - 1] and up >= psd[upper + 1]
        if is_peak and np.max(psd[lower - 1 : lower + 2]) > limit:
            offsets.append(float(m * df))
    return tuple(offsets)


def spectrum_monitor(  # noqa: PLR0913
    detected: ComplexWaveform,
    registry: BandRegistry,
    baseline: dict[int, float] | None,
    *,
    pilot_spacing: int = DEFAULT_PILOT_PERIOD + 1,
    castdown_threshold_db: float = CASTDOWN_THRESHOLD_DB,
    splitting_threshold_db: float = SPLITTING_THRESHOLD_DB,
) -> list[BandStatus]:
    """Flag castdown and pilot-line splitting in every registered band."""
    if baseline is None:
        msg = "Spectrum monitoring needs a vibration-free baseline"
        raise BaselineRequiredError(msg)
    missing = [n for n in registry.registered_ids() if n not in baseline]
    if missing:
        raise BaselineRequiredError(f"No baseline power for nodes {missing}")

    freqs, psd = monitor_spectrum(detected)
    masks, occupied = _band_masks(freqs, registry)
    floor = _floor(psd, occupied)
    df = freqs[1] - freqs[0]

    statuses = []
    for node_id, mask in masks.items():
        entry = registry.entries[node_id]
        power = float(np.sum(psd[mask] - floor) * df)
        reference = baseline[node_id]
        if reference <= 0:
            raise BaselineRequiredError(
                f"Baseline power for node {node_id} must be positive, got {reference}"
            )
        power_db = 10 * math.log10(max(power, reference * 1e-12) / reference)
        sidebands = _sidebands(
            freqs,
            psd,
            entry.carrier_hz,
            entry.bandwidth_hz / pilot_spacing / 2,
            floor,
            splitting_threshold_db,
        )
        status = BandStatus(
            node_id=node_id,
            in_band_power_db=power_db,
            castdown=power_db < -castdown_threshold_db,
            splitting=bool(sidebands),
            splitting_sidebands_hz=sidebands,
        )
        if status.vibrating:
            _LOGGER.info(
                "Node %s band: %.2f dB, castdown=%s, splitting=%s",
                node_id,
                power_db,
                status.castdown,
                status.splitting,
            )
        statuses.append(status)
    return statuses


def demodulate_phase(stream: QuadratureStream, layout: FrameLayout) -> np.ndarray:
    """Wrapped per-pilot phase atan2(P, X) in (-pi, pi]."""
    _, pilots = pilot_samples(stream, layout)
    return np.arctan2(pilots.imag, pilots.real)


def unwrap_phase(wrapped: np.ndarray) -> np.ndarray:
    """Add multiples of 2 pi so successive samples differ by at most pi."""
    return np.unwrap(np.asarray(wrapped, dtype=np.float64))


def phase_to_length(phase: np.ndarray, fiber: FiberConstants) -> np.ndarray:
    """Fiber length change for an optical phase change."""
    return np.asarray(phase, dtype=np.float64) / fiber.phase_per_meter


def strain_psd(
    phase: np.ndarray,
    sample_rate: float,
    gauge_length_m: float,
    fiber: FiberConstants | None = None,
) -> StrainPsd:
    """
    One-sided Welch PSD of a phase series and its strain resolution.

    The noise floor is the median PSD after removing bins near tones, so a
    strong vibration line does not raise it.
    """
    fiber = fiber or FiberConstants()
    phase = np.asarray(phase, dtype=np.float64)
    if phase.size < PSD_SEGMENT:
        raise InsufficientDataError(
            f"PSD needs at least {PSD_SEGMENT} samples, got {phase.size}"
        )
    if not gauge_length_m > 0:
        msg = f"Gauge length must be positive, got {gauge_length_m}"
        raise InvalidArgumentError(msg)

    freqs, psd = signal.welch(
        phase,
        fs=sample_rate,
        window="hann",
        nperseg=PSD_SEGMENT,
        noverlap=PSD_SEGMENT // 2,
        scaling="density",
    )
    # DC is removed by detrending and says nothing about the floor
    keep = np.ones(psd.size, dtype=bool)
    keep[0] = False
    rough = np.median(psd[keep])
    tones = np.flatnonzero(keep & (psd > 10 * rough))
    for tone in tones:
        lo = max(tone - PSD_TONE_GUARD_BINS, 0)
        keep[lo : tone + PSD_TONE_GUARD_BINS + 1] = False
    floor = float(np.median(psd[keep])) if np.any(keep) else float(rough)

    resolution = math.sqrt(floor) / (fiber.phase_per_meter * gauge_length_m)
    return StrainPsd(
        freqs_hz=freqs,
        psd_rad2_per_hz=psd,
        floor_rad2_per_hz=floor,
        strain_resolution_per_rthz=resolution,
        tones_hz=tuple(float(freqs[t]) for t in tones),
    )


def _synchronized_stream(capture: Capture, node_id: int) -> QuadratureStream:
    """Band-selected, demodulated and frame-aligned stream of one node."""
    node = capture.nodes[node_id]
    selected = band_select(capture.detected, capture.registry, node_id)
    stream = demodulate(selected, node.carrier_hz, node.baseband_hz)
    sync = frame_sync(stream, capture.layout.sync_word)
    return replace(stream, frame_offset=sync.offset)


def _calibration_scenario(
    pilot_amplitude_snu: float, trials: int, scenario: ScenarioConfig | None
) -> ScenarioConfig:
    """Single lossless, noiseless node sending a pilot every other slot."""
    if scenario is None:
        node = NodeConfig(node_id=1, carrier_hz=100e3, baseband_hz=50e3)
        scenario = ScenarioConfig(
            nodes=(node,), geometry=NetworkGeometry(node_positions=((0.0, 0.0),))
        )
    node = replace(scenario.nodes[0], fiber_length_m=0.0, excess_noise_snu=0.0)
    return replace(
        scenario,
        nodes=(node,),
        geometry=NetworkGeometry(node_positions=(node.position_xy,)),
        n_symbols=CALIBRATION_PILOT_PERIOD * trials,
        network_capacity=1,
        detector=replace(
            scenario.detector, quantum_efficiency=1.0, electronic_noise_snu=0.0
        ),
        frame=replace(
            scenario.frame,
            pilot_period=CALIBRATION_PILOT_PERIOD,
            pilot_amplitude=pilot_amplitude_snu,
        ),
        vibration_events=(),
    )


def precision_check(
    pilot_amplitude_snu: float,
    trials: int,
    seed: int,
    scenario: ScenarioConfig | None = None,
) -> PrecisionReport:
    """
    Pilot phase precision of a shot-noise-limited link against the 1/A limit.

    A calibration capture of the scenario's first node, with no loss, no
    excess noise and an ideal detector, goes through band selection,
    demodulation and frame sync; the first `trials` pilots are compared
    with their mean phase.
    """
    if trials < MIN_PRECISION_TRIALS:
        raise InvalidArgumentError(
            f"Precision check needs at least {MIN_PRECISION_TRIALS} trials, "
            f"got {trials}"
        )
    if not pilot_amplitude_snu > 0:
        raise InvalidArgumentError(
            f"Pilot amplitude must be positive, got {pilot_amplitude_snu}"
        )

    calibration = _calibration_scenario(pilot_amplitude_snu, trials, scenario)
    node_id = calibration.nodes[0].node_id
    capture = simulate_capture(calibration, seed, vibrations=False)
    stream = _synchronized_stream(capture, node_id)
    _, pilots = pilot_samples(stream, capture.layout)
    if pilots.size < trials:
        raise InsufficientDataError(
            f"Calibration capture holds {pilots.size} pilots, {trials} requested"
        )
    pilots = pilots[:trials]
    measured = pilots * np.exp(-1j * np.angle(np.mean(pilots)))
    error = np.angle(measured)

    photons = pilot_amplitude_snu**2 / 2
    limit = (1 / math.sqrt(2)) / math.sqrt(photons)
    std = float(np.std(error))
    _LOGGER.debug(
        "Precision at %.1f photons: %.4g rad against %.4g rad", photons, std, limit
    )
    return PrecisionReport(
        photon_number=photons,
        measured_phase_std=std,
        quantum_limit=limit,
        ratio=std / limit,
        quadrature_variance=(
            float(np.var(measured.real)),
            float(np.var(measured.imag)),
        ),
        length_std_m=float(phase_to_length(std, calibration.fiber)),
    )


def vibration_trace(
    stream: QuadratureStream, layout: FrameLayout, fiber: FiberConstants
) -> VibrationTrace:
    """Recover the vibration waveform of a frame-synchronized stream."""
    positions, _ = pilot_samples(stream, layout)
    phase = unwrap_phase(demodulate_phase(stream, layout))
    rate = stream.symbol_rate / layout.pilot_spacing
    return VibrationTrace(
        time_s=positions / stream.symbol_rate,
        unwrapped_phase_rad=phase,
        length_change_m=phase_to_length(phase, fiber),
        sample_rate=rate,
    )


def process_spm_node(
    capture: Capture,
    scenario: ScenarioConfig,
    node_id: int,
    status: BandStatus,
) -> SensingReport:
    """Run steps 2 and 3 of the sensing protocol for one node."""
    stream = _synchronized_stream(capture, node_id)
    trace = vibration_trace(stream, capture.layout, scenario.fiber)
    step = float(np.max(np.abs(np.diff(trace.unwrapped_phase_rad))))
    suspended = step > scenario.sensing.suspend_step_rad
    if suspended:
        _LOGGER.warning(
            "Node %s phase step %.3f rad exceeds %.3f rad, QKD suspended",
            node_id,
            step,
            scenario.sensing.suspend_step_rad,
        )

    psd = None
    if trace.unwrapped_phase_rad.size >= PSD_SEGMENT:
        psd = strain_psd(
            trace.unwrapped_phase_rad,
            trace.sample_rate,
            scenario.sensing.gauge_length_m,
            scenario.fiber,
        )
    return SensingReport(
        node_id=node_id,
        status=status,
        trace=trace,
        psd=psd,
        qkd_suspended=suspended,
        max_phase_step_rad=step,
    )


def capture_baseline(scenario: ScenarioConfig, seed: int) -> dict[int, float]:
    """Per-band power of a vibration-free capture with the same seed."""
    quiet = simulate_capture(scenario, seed, vibrations=False)
    return measure_band_power(quiet.detected, quiet.registry)


def run_spm(
    scenario: ScenarioConfig,
    seed: int,
    capture: Capture | None = None,
    baseline: dict[int, float] | None = None,
) -> list[SensingReport | NodeFailure]:
    """Monitor, demodulate and convert every band; failures stay per node."""
    if capture is None:
        capture = simulate_capture(scenario, seed)
    if baseline is None:
        baseline = capture_baseline(scenario, seed)

    statuses = spectrum_monitor(
        capture.detected,
        capture.registry,
        baseline,
        pilot_spacing=capture.layout.pilot_spacing,
        castdown_threshold_db=scenario.sensing.castdown_threshold_db,
        splitting_threshold_db=scenario.sensing.splitting_threshold_db,
    )

    results: list[SensingReport | NodeFailure] = []
    for status in statuses:
        try:
            results.append(process_spm_node(capture, scenario, status.node_id, status))
        except IsaqnError as err:
            _LOGGER.error("Sensing failed for node %s: %s", status.node_id, err)
            results.append(NodeFailure.from_error(status.node_id, err))
    return results
