"""Simulated center-node capture shared by the QKD and sensing pipelines."""

from __future__ import annotations

import logging
import zlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from .coherent_receiver import DetectorParams, detect
from .event_localizer import simulate_event_phases
from .exceptions import InvalidArgumentError, IsaqnError
from .fiber_channel import ChannelState, combine, propagate, pzt_phase, transmittance
from .node_modulator import BandRegistry, NodeConfig, modulate_node, register_band
from .signal_core import (
    ComplexWaveform,
    FrameLayout,
    QuadratureFrame,
    SymbolSequence,
    build_frame,
    gaussian_symbols,
    samples_per_symbol,
)

if TYPE_CHECKING:
    from collections.abc import Iterable

    from .scenario import ScenarioConfig, VibrationEvent

_LOGGER = logging.getLogger(__name__)


def derive_seed(seed: int, *keys: str | int) -> int:
    """Derive an independent stream seed from a run seed and a label."""
    entropy = [seed] + [
        zlib.crc32(key.encode()) if isinstance(key, str) else key for key in keys
    ]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


@dataclass(frozen=True, eq=False)
class NodeTruth:
    """Ground truth kept for one node of a simulated capture."""

    node_id: int
    symbols: SymbolSequence
    frame: QuadratureFrame
    channel: ChannelState
    vibration_phase: np.ndarray | None


@dataclass(frozen=True)
class NodeFailure:
    """Per-node failure record kept in place of a report."""

    node_id: int
    kind: str
    message: str

    @classmethod
    def from_error(cls, node_id: int, err: Exception) -> NodeFailure:
        """Build a record from a raised error."""
        kind = err.kind if isinstance(err, IsaqnError) else "node-failure"
        return cls(node_id, kind, str(err))

    def to_dict(self) -> dict[str, Any]:
        """Return a JSON-ready mapping."""
        return {"node_id": self.node_id, "kind": self.kind, "message": self.message}


@dataclass(frozen=True, eq=False)
class Capture:
    """Detected FDM waveform plus everything the center node knows about it."""

    detected: ComplexWaveform
    registry: BandRegistry
    nodes: dict[int, NodeConfig]
    truth: dict[int, NodeTruth]
    layout: FrameLayout
    detector: DetectorParams
    capture_offset: int
    seed: int
    symbol_rate: float

    @property
    def sample_rate(self) -> float:
        """Capture sample rate in Hz."""
        return self.detected.sample_rate

    @property
    def duration_s(self) -> float:
        """Capture length in seconds."""
        return len(self.detected) / self.detected.sample_rate


def build_registry(nodes: Iterable[NodeConfig]) -> BandRegistry:
    """Register every node's band in node-id order."""
    registry = BandRegistry()
    for node in sorted(nodes, key=lambda n: n.node_id):
        registry = register_band(registry, node)
    return registry


def _common_symbol_rate(nodes: Iterable[NodeConfig]) -> float:
    rates = {node.baseband_hz for node in nodes}
    if len(rates) != 1:
        raise InvalidArgumentError(
            f"Nodes must share one symbol clock, got baseband rates {sorted(rates)}"
        )
    return rates.pop()


def event_phases(
    event: VibrationEvent, scenario: ScenarioConfig, time_s: np.ndarray
) -> dict[int, np.ndarray]:
    """Vibration phase each affected node carries for one event."""
    nodes = {node.node_id: node for node in scenario.nodes}
    waveform = event.waveform

    if event.source_xy is not None:
        return simulate_event_phases(
            event.source_xy,
            scenario.geometry,
            event.magnitude_rad,
            waveform.shape,
            time_s,
            scenario.sensing.attenuation,
            origin_s=event.origin_s,
        )

    phases = {}
    for node_id in event.nodes:
        shape = waveform.shape(time_s - event.origin_s)
        if waveform.amplitude_v is not None:
            phases[node_id] = pzt_phase(
                waveform.amplitude_v * shape, nodes[node_id].pzt, scenario.fiber
            )
        else:
            phases[node_id] = waveform.amplitude_rad * shape
    return phases


def vibration_phases(
    scenario: ScenarioConfig, time_s: np.ndarray
) -> dict[int, np.ndarray]:
    """Sum every configured event into per-node phase series."""
    total: dict[int, np.ndarray] = {}
    for event in scenario.vibration_events:
        for node_id, phase in event_phases(event, scenario, time_s).items():
            total[node_id] = total.get(node_id, 0) + phase
    return total


def simulate_capture(
    scenario: ScenarioConfig,
    seed: int,
    *,
    vibrations: bool = True,
    n_symbols: int | None = None,
) -> Capture:
    """
    Simulate one frame from every node through fiber, splitter and detector.

    The capture starts at a seeded symbol offset into the frame, so the
    center node has to find the sync word before it can use the data.
    """
    n = n_symbols or scenario.n_symbols
    layout = scenario.frame
    fs = scenario.sample_rate_hz
    symbol_rate = _common_symbol_rate(scenario.nodes)
    sps = samples_per_symbol(fs, symbol_rate)
    registry = build_registry(scenario.nodes)

    total_symbols = layout.sync_word.size + layout.payload_length(n)
    time_s = np.arange(total_symbols * sps) / fs
    phases = vibration_phases(scenario, time_s) if vibrations else {}

    waveforms = []
    truth = {}
    for node in sorted(scenario.nodes, key=lambda n: n.node_id):
        symbols = gaussian_symbols(
            n, node.modulation_variance, derive_seed(seed, "symbols", node.node_id)
        )
        frame = build_frame(symbols, layout)
        state = ChannelState(
            transmittance=transmittance(
                node.fiber_length_m, scenario.fiber, scenario.network_capacity
            ),
            static_phase_rad=node.static_phase_rad,
            vibration_phase=phases.get(node.node_id),
            excess_noise_snu=node.excess_noise_snu,
            castdown_db=scenario.channel.castdown_db,
            activity_threshold_rad_s=scenario.channel.activity_threshold_rad_s,
            noise_band=(node.carrier_hz, node.occupied_half_width_hz),
            seed=derive_seed(seed, "channel", node.node_id),
        )
        waveforms.append(propagate(modulate_node(frame, node, fs), state))
        truth[node.node_id] = NodeTruth(
            node.node_id, symbols, frame, state, phases.get(node.node_id)
        )

    detected = detect(
        combine(waveforms), scenario.detector, derive_seed(seed, "detector")
    )
    rng = np.random.default_rng(derive_seed(seed, "offset"))
    offset = int(rng.integers(total_symbols))
    detected = detected.with_samples(np.roll(detected.samples, -offset * sps))

    _LOGGER.debug(
        "Simulated capture of %s nodes, %s symbols, offset %s (seed %s)",
        len(truth),
        total_symbols,
        offset,
        seed,
    )
    return Capture(
        detected=detected,
        registry=registry,
        nodes={node.node_id: node for node in scenario.nodes},
        truth=truth,
        layout=layout,
        detector=scenario.detector,
        capture_offset=offset,
        seed=seed,
        symbol_rate=symbol_rate,
    )
