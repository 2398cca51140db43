"""Vibration source localization from per-node phase waveforms."""

from __future__ import annotations

import logging
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Protocol

import numpy as np
from scipy import signal
from scipy.optimize import least_squares

from .const import (
    AMBIGUITY_TOLERANCE_M,
    DEFAULT_ATTENUATION_REF_M,
    DEFAULT_FIBER_LIGHT_SPEED_MPS,
    DEFAULT_WAVE_SPEED_MPS,
    MAX_LOCATE_RESIDUAL_M,
    MIN_TDOA_CORRELATION,
)
from .exceptions import (
    GeometryError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidModelError,
    LocalizationFailureError,
    NoCommonEventError,
)

if TYPE_CHECKING:
    from .spm_sensing import VibrationTrace

_LOGGER = logging.getLogger(__name__)

Point = tuple[float, float]


@dataclass(frozen=True)
class NetworkGeometry:
    """Node layout used for localization."""

    node_positions: tuple[Point, ...]
    center_position: Point = (0.0, 0.0)
    fiber_lengths_m: tuple[float, ...] = ()
    wave_speed_mps: float = DEFAULT_WAVE_SPEED_MPS
    fiber_light_speed_mps: float = DEFAULT_FIBER_LIGHT_SPEED_MPS
    node_ids: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        """Fill defaults and validate."""
        n = len(self.node_positions)
        if not self.node_ids:
            object.__setattr__(self, "node_ids", tuple(range(1, n + 1)))
        if not self.fiber_lengths_m:
            object.__setattr__(self, "fiber_lengths_m", (0.0,) * n)
        if len(self.node_ids) != n or len(self.fiber_lengths_m) != n:
            raise InvalidArgumentError(
                "Geometry needs one id and one fiber length per node position"
            )
        if not self.wave_speed_mps > 0 or not self.fiber_light_speed_mps > 0:
            raise InvalidArgumentError("Wave and light speeds must be positive")

    @property
    def positions(self) -> np.ndarray:
        """Node positions as an (N, 2) array."""
        return np.asarray(self.node_positions, dtype=np.float64).reshape(-1, 2)

    @property
    def centroid(self) -> np.ndarray:
        """Mean node position."""
        return self.positions.mean(axis=0)

    def index_of(self, node_id: int) -> int:
        """Position of node_id in the geometry tables."""
        try:
            return self.node_ids.index(node_id)
        except ValueError as err:
            msg = f"Node {node_id} is not in the geometry"
            raise InvalidArgumentError(msg) from err

    def check_solvable(self) -> None:
        """Raise GeometryError unless at least three non-collinear nodes exist."""
        if len(self.node_positions) < 3:  # noqa: PLR2004
            raise GeometryError(
                f"Localization needs at least 3 nodes, got {len(self.node_positions)}"
            )
        centered = self.positions - self.centroid
        scale = max(float(np.max(np.abs(centered))), 1.0)
        if np.linalg.matrix_rank(centered, tol=1e-9 * scale) < 2:  # noqa: PLR2004
            raise GeometryError("Node positions are collinear")


@dataclass(frozen=True)
class EventEstimate:
    """Located vibration source."""

    position: Point
    arrival_times: tuple[float, ...]
    tdoa: tuple[float, ...]
    residual: float
    distances_m: tuple[float, ...]
    node_ids: tuple[int, ...]
    magnitude: float | None = None
    ambiguous: bool = False
    alternates: tuple[Point, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict[str, object]:
        """Return a JSON-ready mapping."""
        return {
            "position": list(self.position),
            "arrival_times": list(self.arrival_times),
            "tdoa": list(self.tdoa),
            "residual": self.residual,
            "distances_m": list(self.distances_m),
            "node_ids": list(self.node_ids),
            "magnitude": self.magnitude,
            "ambiguous": self.ambiguous,
            "alternates": [list(p) for p in self.alternates],
        }


@dataclass(frozen=True)
class MagnitudeEstimate:
    """Source magnitude inferred from per-node phase amplitudes."""

    value: float
    per_node: dict[int, float]
    used_nodes: tuple[int, ...]
    degraded: bool


class AttenuationModel(Protocol):
    """Amplitude attenuation of the seismic wave over a distance."""

    def __call__(self, distance_m: float) -> float:
        """Return the attenuation coefficient at distance_m."""


@dataclass(frozen=True)
class InverseDistanceAttenuation:
    """gamma(d) = d_ref / d."""

    d_ref_m: float = DEFAULT_ATTENUATION_REF_M

    def __call__(self, distance_m: float) -> float:
        """Return d_ref / d."""
        if distance_m <= 0:
            return math.inf
        return self.d_ref_m / distance_m


@dataclass(frozen=True)
class ProportionalAttenuation:
    """gamma(d) = scale * d, the literal proportional-to-travel-time reading."""

    scale_per_m: float = 1.0 / DEFAULT_ATTENUATION_REF_M

    def __call__(self, distance_m: float) -> float:
        """Return scale * d."""
        return self.scale_per_m * distance_m


def arrival_times(source: Point, geometry: NetworkGeometry) -> np.ndarray:
    """Seismic travel time from the source to every node."""
    distances = np.hypot(*(geometry.positions - np.asarray(source)).T)
    return distances / geometry.wave_speed_mps


def measured_tdoa(
    source: Point, geometry: NetworkGeometry
) -> dict[tuple[int, int], float]:
    """Arrival-time differences as seen at the center node, fiber delay included."""
    seen = arrival_times(source, geometry) + (
        np.asarray(geometry.fiber_lengths_m) / geometry.fiber_light_speed_mps
    )
    ids = geometry.node_ids
    return {
        (ids[j], ids[k]): float(seen[j] - seen[k])
        for j in range(len(ids))
        for k in range(len(ids))
        if j != k
    }


def simulate_event_phases(  # noqa: PLR0913
    source: Point,
    geometry: NetworkGeometry,
    magnitude_rad: float,
    pulse: Callable[[np.ndarray], np.ndarray],
    time_s: np.ndarray,
    model: AttenuationModel,
    origin_s: float = 0.0,
) -> dict[int, np.ndarray]:
    """
    Per-node vibration phase for a source firing at origin_s.

    Each node sees the delayed, attenuated source waveform; the phase reaches
    the center node after a further L / c of fiber travel.
    """
    travel = arrival_times(source, geometry)
    fiber_delay = np.asarray(geometry.fiber_lengths_m) / geometry.fiber_light_speed_mps
    phases = {}
    for index, node_id in enumerate(geometry.node_ids):
        distance = travel[index] * geometry.wave_speed_mps
        gain = model(distance)
        if not math.isfinite(gain):
            raise InvalidModelError(f"Attenuation at {distance:.1f} m is not finite")
        delay = origin_s + travel[index] + fiber_delay[index]
        phases[node_id] = gain * magnitude_rad * pulse(time_s - delay)
    return phases


def _parabolic_offset(values: np.ndarray, peak: int) -> float:
    """Sub-sample peak offset from a parabola through three points."""
    if peak == 0 or peak == values.size - 1:
        return 0.0
    left, center, right = values[peak - 1], values[peak], values[peak + 1]
    denominator = left - 2 * center + right
    if denominator == 0:
        return 0.0
    return 0.5 * (left - right) / denominator


def _pair_delay(later: np.ndarray, earlier: np.ndarray, rate: float) -> float:
    """Delay of `later` relative to `earlier` in seconds."""
    a = later - np.mean(later)
    b = earlier - np.mean(earlier)
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0:
        raise NoCommonEventError("A trace carries no vibration")
    correlation = signal.correlate(a, b, mode="full", method="fft") / norm
    lags = signal.correlation_lags(a.size, b.size, mode="full")
    peak = int(np.argmax(correlation))
    if correlation[peak] < MIN_TDOA_CORRELATION:
        raise NoCommonEventError(
            f"Correlation peak {correlation[peak]:.3f} is below {MIN_TDOA_CORRELATION}"
        )
    return (lags[peak] + _parabolic_offset(correlation, peak)) / rate


def tdoa(traces: Mapping[int, VibrationTrace]) -> dict[tuple[int, int], float]:
    """
    Pairwise arrival-time differences by cross-correlation.

    Delta t_jk is positive when node j receives the event after node k.
    """
    if len(traces) < 2:  # noqa: PLR2004
        raise InsufficientDataError("TDOA needs at least two traces")
    ids = sorted(traces)
    rates = {traces[i].sample_rate for i in ids}
    if len(rates) != 1:
        raise InvalidArgumentError(f"Traces have different sample rates: {rates}")
    rate = rates.pop()
    length = min(traces[i].unwrapped_phase_rad.size for i in ids)

    differences = {}
    for a, j in enumerate(ids):
        for k in ids[a + 1 :]:
            delay = _pair_delay(
                traces[j].unwrapped_phase_rad[:length],
                traces[k].unwrapped_phase_rad[:length],
                rate,
            )
            differences[(j, k)] = delay
            differences[(k, j)] = -delay
    _LOGGER.debug("TDOA estimates: %s", differences)
    return differences


def _chain_offsets(
    differences: Mapping[tuple[int, int], float], geometry: NetworkGeometry
) -> np.ndarray:
    """Arrival time of every node minus the first node's, fiber delay removed."""
    ids = geometry.node_ids
    lengths = geometry.fiber_lengths_m
    c = geometry.fiber_light_speed_mps
    offsets = np.zeros(len(ids))
    for k in range(1, len(ids)):
        key = (ids[k - 1], ids[k])
        if key not in differences:
            raise InsufficientDataError(f"Missing TDOA for nodes {key}")
        # t_{k-1} - t_k = dt_{k-1,k} - (L_{k-1} - L_k) / c
        step = differences[key] - (lengths[k - 1] - lengths[k]) / c
        offsets[k] = offsets[k - 1] - step
    return offsets


def locate(
    differences: Mapping[tuple[int, int], float], geometry: NetworkGeometry
) -> EventEstimate:
    """Solve the circle system for the source position and first arrival time."""
    geometry.check_solvable()
    positions = geometry.positions
    v = geometry.wave_speed_mps
    ranges_offset = v * _chain_offsets(differences, geometry)

    def residuals(params: np.ndarray) -> np.ndarray:
        distances = np.hypot(positions[:, 0] - params[0], positions[:, 1] - params[1])
        return distances - (params[2] + ranges_offset)

    centroid = geometry.centroid
    starts = [centroid, *positions]
    solutions: list[tuple[float, np.ndarray]] = []
    for start in starts:
        guess = np.array([start[0], start[1], np.hypot(*(positions[0] - start))])
        try:
            fit = least_squares(residuals, guess, method="lm", xtol=1e-12, ftol=1e-12)
        except ValueError as err:
            _LOGGER.debug("Solver start %s failed: %s", start, err)
            continue
        rms = float(np.sqrt(np.mean(fit.fun**2)))
        solutions.append((rms, fit.x))

    if not solutions:
        raise LocalizationFailureError("Least-squares solver did not converge")

    best_rms = min(rms for rms, _ in solutions)
    # Distinct minima whose residuals tie with the best one
    tied: list[tuple[float, np.ndarray]] = []
    for rms, params in sorted(solutions, key=lambda item: item[0]):
        if rms - best_rms > AMBIGUITY_TOLERANCE_M:
            continue
        if all(
            np.hypot(*(params[:2] - other[:2])) > AMBIGUITY_TOLERANCE_M
            for _, other in tied
        ):
            tied.append((rms, params))
    tied.sort(key=lambda item: np.hypot(*(item[1][:2] - centroid)))
    rms, params = tied[0]

    if rms > MAX_LOCATE_RESIDUAL_M:
        raise LocalizationFailureError(
            f"Localization residual {rms:.2f} m exceeds {MAX_LOCATE_RESIDUAL_M} m"
        )

    arrivals = (params[2] + ranges_offset) / v
    ids = geometry.node_ids
    chain = tuple(
        differences[(ids[k], ids[k + 1])] for k in range(len(ids) - 1)
    )
    estimate = EventEstimate(
        position=(float(params[0]), float(params[1])),
        arrival_times=tuple(float(t) for t in arrivals),
        tdoa=chain,
        residual=rms,
        distances_m=tuple(float(d) for d in arrivals * v),
        node_ids=ids,
        ambiguous=len(tied) > 1,
        alternates=tuple((float(p[0]), float(p[1])) for _, p in tied[1:]),
    )
    if estimate.ambiguous:
        _LOGGER.warning(
            "Localization is ambiguous: %s and %s",
            estimate.position,
            estimate.alternates,
        )
    _LOGGER.debug("Located event at %s (residual %.3g m)", estimate.position, rms)
    return estimate


def _trace_noise(phase: np.ndarray) -> float:
    """Robust per-sample noise level from successive differences."""
    steps = np.diff(phase)
    return float(1.4826 * np.median(np.abs(steps - np.median(steps))) / math.sqrt(2))


def magnitude(
    traces: Mapping[int, VibrationTrace],
    estimate: EventEstimate,
    attenuation_model: AttenuationModel,
) -> MagnitudeEstimate:
    """Source magnitude as the mean of per-node peak phase over attenuation."""
    per_node: dict[int, float] = {}
    silent: list[int] = []
    for index, node_id in enumerate(estimate.node_ids):
        if node_id not in traces:
            silent.append(node_id)
            continue
        phase = traces[node_id].unwrapped_phase_rad
        amplitude = float(np.max(np.abs(phase - np.median(phase))))
        if amplitude < 6 * _trace_noise(phase):
            silent.append(node_id)
            continue
        gamma = attenuation_model(estimate.distances_m[index])
        if not math.isfinite(gamma) or gamma <= 0:
            raise InvalidModelError(
                f"Attenuation model returned {gamma} at "
                f"{estimate.distances_m[index]:.1f} m"
            )
        per_node[node_id] = amplitude / gamma

    if not per_node:
        raise InsufficientDataError("No node observed the event above its noise")
    if silent:
        _LOGGER.warning("Magnitude degraded, silent nodes: %s", silent)

    return MagnitudeEstimate(
        value=float(np.mean(list(per_node.values()))),
        per_node=per_node,
        used_nodes=tuple(per_node),
        degraded=bool(silent),
    )
