"""Child node: FDM band registration and carrier up-conversion."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .const import DEFAULT_MODULATION_VARIANCE_SNU
from .exceptions import (
    BandConflictError,
    DuplicateNodeError,
    InvalidArgumentError,
    InvalidSampleRateError,
)
from .fiber_channel import PztParams
from .signal_core import (
    ComplexWaveform,
    QuadratureFrame,
    occupied_half_width,
    samples_per_symbol,
    shape_pulses,
)

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class NodeConfig:
    """Configuration of one child node."""

    node_id: int
    carrier_hz: float
    baseband_hz: float
    fiber_length_m: float = 0.0
    modulation_variance: float = DEFAULT_MODULATION_VARIANCE_SNU
    position_xy: tuple[float, float] = (0.0, 0.0)
    pzt: PztParams = field(default_factory=PztParams)
    static_phase_rad: float = 0.0
    excess_noise_snu: float = 0.0

    def __post_init__(self) -> None:
        """Validate the node."""
        if not self.baseband_hz > 0:
            raise InvalidArgumentError(
                f"Node {self.node_id} baseband must be positive, got {self.baseband_hz}"
            )
        if not self.carrier_hz > self.baseband_hz / 2:
            raise InvalidArgumentError(
                f"Node {self.node_id} carrier {self.carrier_hz} Hz must exceed half "
                f"the baseband {self.baseband_hz} Hz"
            )
        if self.fiber_length_m < 0:
            raise InvalidArgumentError(
                f"Node {self.node_id} fiber length must be non-negative, "
                f"got {self.fiber_length_m}"
            )
        if not self.modulation_variance > 0:
            raise InvalidArgumentError(
                f"Node {self.node_id} modulation variance must be positive, "
                f"got {self.modulation_variance}"
            )

    @property
    def occupied_half_width_hz(self) -> float:
        """Half width of the RRC-shaped spectrum around the carrier."""
        return occupied_half_width(self.baseband_hz)

    def scaled(self, factor: float) -> NodeConfig:
        """Return the node with carrier and baseband multiplied by factor."""
        return replace(
            self,
            carrier_hz=self.carrier_hz * factor,
            baseband_hz=self.baseband_hz * factor,
        )


@dataclass(frozen=True)
class BandEntry:
    """One node's frequency band as seen by the center node."""

    carrier_hz: float
    bandwidth_hz: float
    registered: bool = True

    def overlaps(self, other: BandEntry) -> bool:
        """Return whether two bands overlap."""
        spacing = abs(self.carrier_hz - other.carrier_hz)
        return spacing < (self.bandwidth_hz + other.bandwidth_hz) / 2


@dataclass(frozen=True)
class BandRegistry:
    """Frequency bands registered with the center node."""

    entries: dict[int, BandEntry] = field(default_factory=dict)

    def is_registered(self, node_id: int) -> bool:
        """Return whether node_id holds a registered band."""
        entry = self.entries.get(node_id)
        return entry is not None and entry.registered

    def registered_ids(self) -> list[int]:
        """Registered node ids in ascending order."""
        return sorted(n for n, e in self.entries.items() if e.registered)


def register_band(registry: BandRegistry, node: NodeConfig) -> BandRegistry:
    """Register a node's band, rejecting duplicates and overlaps."""
    if node.node_id in registry.entries:
        raise DuplicateNodeError(f"Node {node.node_id} is already registered")

    entry = BandEntry(node.carrier_hz, node.baseband_hz)
    for other_id, other in registry.entries.items():
        if other.registered and entry.overlaps(other):
            raise BandConflictError(
                f"Band of node {node.node_id} at {node.carrier_hz:.6g} Hz overlaps "
                f"node {other_id} at {other.carrier_hz:.6g} Hz"
            )

    _LOGGER.debug(
        "Registered band for node %s at %s Hz (%s Hz wide)",
        node.node_id,
        node.carrier_hz,
        node.baseband_hz,
    )
    return BandRegistry({**registry.entries, node.node_id: entry})


def modulate_node(
    frame: QuadratureFrame,
    node: NodeConfig,
    sample_rate: float,
    snu_scale: float = 1.0,
) -> ComplexWaveform:
    """Pulse-shape a frame and up-convert it onto the node's carrier."""
    if len(frame) == 0:
        raise InvalidArgumentError("Cannot modulate an empty frame")
    nyquist = 2 * (node.carrier_hz + node.baseband_hz / 2)
    if sample_rate < nyquist:
        raise InvalidSampleRateError(
            f"Sample rate {sample_rate} Hz is below {nyquist} Hz "
            f"for node {node.node_id}"
        )

    sps = samples_per_symbol(sample_rate, node.baseband_hz)
    # Symbol amplitudes are in SNU, samples in raw units of snu_scale per sample
    baseband = shape_pulses(frame.complex, sps) * math.sqrt(snu_scale / sps)
    t = np.arange(baseband.size) / sample_rate
    carrier = np.exp(2j * np.pi * node.carrier_hz * t)

    _LOGGER.debug(
        "Modulated node %s: %s symbols at %s sps on %s Hz",
        node.node_id,
        len(frame),
        sps,
        node.carrier_hz,
    )
    return ComplexWaveform(baseband * carrier, sample_rate, snu_scale)
