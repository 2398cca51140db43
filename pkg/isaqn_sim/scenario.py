"""Scenario files: YAML schema, profile scaling and validation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import TYPE_CHECKING, Any, Literal, NoReturn

import numpy as np
import yaml
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from .coherent_receiver import DetectorParams
from .const import (
    CASTDOWN_THRESHOLD_DB,
    DEFAULT_ACTIVITY_THRESHOLD_RAD_S,
    DEFAULT_ATTENUATION_DB_PER_KM,
    DEFAULT_ATTENUATION_REF_M,
    DEFAULT_BETA,
    DEFAULT_CASTDOWN_DB,
    DEFAULT_ELECTRONIC_NOISE_SNU,
    DEFAULT_FIBER_LIGHT_SPEED_MPS,
    DEFAULT_MODULATION_VARIANCE_SNU,
    DEFAULT_P11,
    DEFAULT_P12,
    DEFAULT_PILOT_AMPLITUDE_SNU,
    DEFAULT_PILOT_PERIOD,
    DEFAULT_POISSON_RATIO,
    DEFAULT_PZT_D_COEFF,
    DEFAULT_PZT_OUTER_RADIUS_M,
    DEFAULT_PZT_THICKNESS_M,
    DEFAULT_PZT_WOUND_FIBER_M,
    DEFAULT_QUANTUM_EFFICIENCY,
    DEFAULT_REFRACTIVE_INDEX,
    DEFAULT_REP_RATE_HZ,
    DEFAULT_SYMBOLS_PER_FRAME,
    DEFAULT_SYNC_LENGTH,
    DEFAULT_WAVE_SPEED_MPS,
    DEFAULT_WAVELENGTH_M,
    DESK_FREQUENCY_SCALE,
    PROFILE_DESK,
    PROFILE_PAPER,
    SPLITTING_THRESHOLD_DB,
    SUSPEND_PHASE_STEP_RAD,
)
from .event_localizer import (
    AttenuationModel,
    InverseDistanceAttenuation,
    NetworkGeometry,
    ProportionalAttenuation,
)
from .exceptions import IsaqnError, ScenarioError
from .fiber_channel import FiberConstants, HysteresisCurve, PztParams
from .network import build_registry
from .node_modulator import NodeConfig
from .signal_core import FrameLayout, default_sync_word

if TYPE_CHECKING:
    from pydantic_core import ErrorDetails

_LOGGER = logging.getLogger(__name__)

SCENARIO_VERSION = 1
BUNDLED_PACKAGE = "isaqn_sim.scenarios"
PROFILES = (PROFILE_PAPER, PROFILE_DESK)


class _Section(BaseModel):
    """Part of a scenario file; unknown keys are errors."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class ChannelDefaults(_Section):
    """Channel behavior shared by every node."""

    castdown_db: float = Field(default=DEFAULT_CASTDOWN_DB, ge=0)
    activity_threshold_rad_s: float = Field(
        default=DEFAULT_ACTIVITY_THRESHOLD_RAD_S, gt=0
    )


@dataclass(frozen=True)
class SensingConfig:
    """Thresholds and models used by the sensing pipeline."""

    suspend_step_rad: float = SUSPEND_PHASE_STEP_RAD
    gauge_length_m: float = DEFAULT_PZT_WOUND_FIBER_M
    castdown_threshold_db: float = CASTDOWN_THRESHOLD_DB
    splitting_threshold_db: float = SPLITTING_THRESHOLD_DB
    attenuation: AttenuationModel = field(default_factory=InverseDistanceAttenuation)
    localize: bool = True


class VibrationWaveform(_Section):
    """Source waveform of a vibration event."""

    kind: Literal["sine", "burst"] = "sine"
    frequency_hz: float = Field(default=500.0, gt=0)
    amplitude_v: float | None = None
    amplitude_rad: float | None = 1.0
    width_s: float = Field(default=0.02, gt=0)

    @model_validator(mode="after")
    def check_amplitude(self) -> VibrationWaveform:
        """Require a drive voltage or a phase amplitude."""
        if self.amplitude_v is None and self.amplitude_rad is None:
            msg = "Waveform needs amplitude_v or amplitude_rad"
            raise ValueError(msg)
        return self

    def shape(self, time_s: np.ndarray) -> np.ndarray:
        """Unit-amplitude waveform at the given instants."""
        tone = np.sin(2 * np.pi * self.frequency_hz * time_s)
        if self.kind == "burst":
            return tone * np.exp(-0.5 * (time_s / self.width_s) ** 2)
        return tone


class VibrationEvent(_Section):
    """Vibration applied to a node set, or radiated from a source position."""

    waveform: VibrationWaveform = Field(default_factory=VibrationWaveform)
    nodes: tuple[int, ...] = ()
    source_xy: tuple[float, float] | None = None
    magnitude_rad: float = 1.0
    origin_s: float = 0.0

    @model_validator(mode="after")
    def check_one_target(self) -> VibrationEvent:
        """Require a node set or a source position, not both."""
        if (self.source_xy is not None) == bool(self.nodes):
            msg = "Event needs exactly one of nodes or source_xy"
            raise ValueError(msg)
        return self


class DetectorSection(_Section):
    """Detector block of a scenario file."""

    quantum_efficiency: float = Field(default=DEFAULT_QUANTUM_EFFICIENCY, gt=0, le=1)
    electronic_noise_snu: float = Field(default=DEFAULT_ELECTRONIC_NOISE_SNU, ge=0)
    bandwidth_hz: float | None = Field(default=None, gt=0)

    def build(self, factor: float) -> DetectorParams:
        """Detector parameters with the bandwidth on the profile's scale."""
        return DetectorParams(
            quantum_efficiency=self.quantum_efficiency,
            electronic_noise_snu=self.electronic_noise_snu,
            bandwidth_hz=(
                None if self.bandwidth_hz is None else self.bandwidth_hz * factor
            ),
        )


class FiberSection(_Section):
    """Fiber block of a scenario file."""

    wavelength_m: float = Field(default=DEFAULT_WAVELENGTH_M, gt=0)
    refractive_index: float = Field(default=DEFAULT_REFRACTIVE_INDEX, gt=1, lt=2)
    poisson_ratio: float = Field(default=DEFAULT_POISSON_RATIO, gt=0, lt=0.5)
    p11: float = Field(default=DEFAULT_P11, gt=0)
    p12: float = Field(default=DEFAULT_P12, gt=0)
    attenuation_db_per_km: float = Field(default=DEFAULT_ATTENUATION_DB_PER_KM, gt=0)
    light_speed_fiber_mps: float = Field(default=DEFAULT_FIBER_LIGHT_SPEED_MPS, gt=0)

    def build(self) -> FiberConstants:
        """Fiber constants."""
        return FiberConstants(**self.model_dump())


class FrameSection(_Section):
    """Frame block of a scenario file."""

    pilot_period: int = Field(default=DEFAULT_PILOT_PERIOD, ge=2)
    pilot_amplitude: float = Field(default=DEFAULT_PILOT_AMPLITUDE_SNU, gt=0)
    sync_length: int = Field(default=DEFAULT_SYNC_LENGTH, ge=1)
    symbols_per_frame: int = Field(default=DEFAULT_SYMBOLS_PER_FRAME, gt=0)

    @model_validator(mode="after")
    def check_sync_fits(self) -> FrameSection:
        """Keep the sync word inside the frame."""
        if self.sync_length >= self.symbols_per_frame:
            msg = (
                f"sync_length {self.sync_length} must be shorter than "
                f"symbols_per_frame {self.symbols_per_frame}"
            )
            raise ValueError(msg)
        return self

    def build(self) -> FrameLayout:
        """Frame layout with the default sync word of the configured length."""
        return FrameLayout(
            pilot_period=self.pilot_period,
            pilot_amplitude=self.pilot_amplitude,
            sync_word=default_sync_word(self.sync_length),
            symbols_per_frame=self.symbols_per_frame,
        )


class AttenuationSection(_Section):
    """Vibration attenuation model."""

    model: Literal["inverse-distance", "proportional"] = "inverse-distance"
    d_ref_m: float = Field(default=DEFAULT_ATTENUATION_REF_M, gt=0)
    scale_per_m: float = Field(default=1.0 / DEFAULT_ATTENUATION_REF_M, gt=0)

    def build(self) -> AttenuationModel:
        """Attenuation callable for the selected model."""
        if self.model == "proportional":
            return ProportionalAttenuation(self.scale_per_m)
        return InverseDistanceAttenuation(self.d_ref_m)


class SensingSection(_Section):
    """Sensing block of a scenario file."""

    suspend_step_rad: float = Field(default=SUSPEND_PHASE_STEP_RAD, gt=0)
    gauge_length_m: float = Field(default=DEFAULT_PZT_WOUND_FIBER_M, gt=0)
    castdown_threshold_db: float = Field(default=CASTDOWN_THRESHOLD_DB, gt=0)
    splitting_threshold_db: float = Field(default=SPLITTING_THRESHOLD_DB, gt=0)
    attenuation: AttenuationSection = Field(default_factory=AttenuationSection)
    localize: bool = True

    def build(self) -> SensingConfig:
        """Sensing thresholds with the attenuation model resolved."""
        return SensingConfig(
            suspend_step_rad=self.suspend_step_rad,
            gauge_length_m=self.gauge_length_m,
            castdown_threshold_db=self.castdown_threshold_db,
            splitting_threshold_db=self.splitting_threshold_db,
            attenuation=self.attenuation.build(),
            localize=self.localize,
        )


class GeometrySection(_Section):
    """Geometry block of a scenario file."""

    center_position: tuple[float, float] = (0.0, 0.0)
    wave_speed_mps: float = Field(default=DEFAULT_WAVE_SPEED_MPS, gt=0)
    fiber_light_speed_mps: float = Field(default=DEFAULT_FIBER_LIGHT_SPEED_MPS, gt=0)

    def build(self, nodes: list[NodeConfig]) -> NetworkGeometry:
        """Geometry of the given nodes, in node-id order."""
        ordered = sorted(nodes, key=lambda n: n.node_id)
        return NetworkGeometry(
            node_positions=tuple(n.position_xy for n in ordered),
            center_position=self.center_position,
            fiber_lengths_m=tuple(n.fiber_length_m for n in ordered),
            wave_speed_mps=self.wave_speed_mps,
            fiber_light_speed_mps=self.fiber_light_speed_mps,
            node_ids=tuple(n.node_id for n in ordered),
        )


class PztSection(_Section):
    """PZT block of a node."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    d_coeff: float = Field(default=DEFAULT_PZT_D_COEFF, gt=0)
    outer_radius_m: float = Field(default=DEFAULT_PZT_OUTER_RADIUS_M, gt=0)
    thickness_m: float = Field(default=DEFAULT_PZT_THICKNESS_M, gt=0)
    wound_fiber_m: float = Field(default=DEFAULT_PZT_WOUND_FIBER_M, gt=0)
    hysteresis_table: HysteresisCurve | None = None

    @field_validator("hysteresis_table", mode="before")
    @classmethod
    def validate_table(cls, value: Any) -> Any:
        """Load a hysteresis table path into a curve."""
        if value is None or isinstance(value, HysteresisCurve):
            return value
        try:
            return HysteresisCurve.from_table(str(value))
        except (OSError, ValueError, IsaqnError) as err:
            msg = f"cannot load {value}: {err}"
            raise ValueError(msg) from err

    def build(self) -> PztParams:
        """PZT parameters with the loaded hysteresis curve."""
        return PztParams(
            d_coeff=self.d_coeff,
            outer_radius_m=self.outer_radius_m,
            thickness_m=self.thickness_m,
            wound_fiber_m=self.wound_fiber_m,
            hysteresis=self.hysteresis_table,
        )


class NodeSection(_Section):
    """One entry of the nodes list."""

    node_id: int = Field(alias="id")
    carrier_hz: float = Field(gt=0)
    baseband_hz: float = Field(gt=0)
    fiber_length_m: float = Field(default=0.0, ge=0)
    modulation_variance: float = Field(default=DEFAULT_MODULATION_VARIANCE_SNU, gt=0)
    position_xy: tuple[float, float] = (0.0, 0.0)
    static_phase_rad: float = 0.0
    excess_noise_snu: float = Field(default=0.0, ge=0)
    pzt: PztSection = Field(default_factory=PztSection)

    @model_validator(mode="after")
    def check_carrier(self) -> NodeSection:
        """Keep the lower band edge above zero."""
        if not self.carrier_hz > self.baseband_hz / 2:
            msg = (
                f"carrier {self.carrier_hz} Hz must exceed half the baseband "
                f"{self.baseband_hz} Hz"
            )
            raise ValueError(msg)
        return self

    def build(self, factor: float) -> NodeConfig:
        """Node configuration with frequencies on the profile's scale."""
        return NodeConfig(
            node_id=self.node_id,
            carrier_hz=self.carrier_hz * factor,
            baseband_hz=self.baseband_hz * factor,
            fiber_length_m=self.fiber_length_m,
            modulation_variance=self.modulation_variance,
            position_xy=self.position_xy,
            pzt=self.pzt.build(),
            static_phase_rad=self.static_phase_rad,
            excess_noise_snu=self.excess_noise_snu,
        )


class ScenarioFile(_Section):
    """Schema of a scenario file; frequencies are paper-scale."""

    version: int = SCENARIO_VERSION
    name: str | None = None
    profile: str | None = None
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    n_symbols: int | None = Field(default=None, ge=1)
    sample_rate_hz: float | None = Field(default=None, gt=0)
    network_capacity: int = Field(default=8, ge=1)
    rep_rate_hz: float = Field(default=DEFAULT_REP_RATE_HZ, gt=0)
    beta: float = Field(default=DEFAULT_BETA, gt=0, le=1)
    detector: DetectorSection = Field(default_factory=DetectorSection)
    fiber: FiberSection = Field(default_factory=FiberSection)
    frame: FrameSection = Field(default_factory=FrameSection)
    channel: ChannelDefaults = Field(default_factory=ChannelDefaults)
    sensing: SensingSection = Field(default_factory=SensingSection)
    geometry: GeometrySection = Field(default_factory=GeometrySection)
    nodes: list[NodeSection] = Field(min_length=1)
    vibration_events: list[VibrationEvent] = Field(default_factory=list)
    phase_smoothing: int = Field(default=1, ge=1)
    estimation_fraction: float = Field(default=1.0, gt=0, le=1)
    logger: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="before")
    @classmethod
    def validate_blank_sections(cls, data: Any) -> Any:
        """Treat keys left blank as absent."""
        if isinstance(data, dict):
            return {key: value for key, value in data.items() if value is not None}
        return data

    @field_validator("version")
    @classmethod
    def validate_version(cls, value: int) -> int:
        """Accept only the current scenario version."""
        if value != SCENARIO_VERSION:
            msg = f"unsupported version {value}"
            raise ValueError(msg)
        return value

    @field_validator("profile")
    @classmethod
    def validate_profile(cls, value: str | None) -> str | None:
        """Accept only the known frequency profiles."""
        if value is not None and value not in PROFILES:
            msg = f"must be {PROFILE_PAPER} or {PROFILE_DESK}, got {value}"
            raise ValueError(msg)
        return value

@dataclass(frozen=True, eq=False)
class ScenarioConfig:
    """Fully validated scenario."""

    nodes: tuple[NodeConfig, ...]
    geometry: NetworkGeometry
    name: str = "scenario"
    version: int = SCENARIO_VERSION
    profile: str = PROFILE_DESK
    seeds: tuple[int, ...] = (0,)
    n_symbols: int = 100_000
    sample_rate_hz: float = 1e6
    network_capacity: int = 8
    rep_rate_hz: float = DEFAULT_REP_RATE_HZ
    beta: float = DEFAULT_BETA
    detector: DetectorParams = field(default_factory=DetectorParams)
    fiber: FiberConstants = field(default_factory=FiberConstants)
    frame: FrameLayout = field(default_factory=FrameLayout)
    channel: ChannelDefaults = field(default_factory=ChannelDefaults)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    vibration_events: tuple[VibrationEvent, ...] = ()
    phase_smoothing: int = 1
    estimation_fraction: float = 1.0
    logger: dict[str, Any] = field(default_factory=dict)

    @property
    def node_ids(self) -> list[int]:
        """Node ids in ascending order."""
        return sorted(node.node_id for node in self.nodes)

    @property
    def has_source_events(self) -> bool:
        """Whether any event radiates from a source position."""
        return any(event.source_xy is not None for event in self.vibration_events)

    def node(self, node_id: int) -> NodeConfig:
        """Return the node with node_id."""
        for node in self.nodes:
            if node.node_id == node_id:
                return node
        raise ScenarioError(f"Scenario has no node {node_id}")

    def without_vibrations(self) -> ScenarioConfig:
        """Return the scenario with every vibration event removed."""
        return replace(self, vibration_events=())

    def to_dict(self) -> dict[str, Any]:
        """Echo every setting, defaults included."""
        attenuation = self.sensing.attenuation
        return {
            "version": self.version,
            "name": self.name,
            "profile": self.profile,
            "seeds": list(self.seeds),
            "n_symbols": self.n_symbols,
            "sample_rate_hz": self.sample_rate_hz,
            "network_capacity": self.network_capacity,
            "rep_rate_hz": self.rep_rate_hz,
            "beta": self.beta,
            "phase_smoothing": self.phase_smoothing,
            "estimation_fraction": self.estimation_fraction,
            "detector": {
                "quantum_efficiency": self.detector.quantum_efficiency,
                "electronic_noise_snu": self.detector.electronic_noise_snu,
                "bandwidth_hz": self.detector.bandwidth_hz,
            },
            "fiber": {
                "wavelength_m": self.fiber.wavelength_m,
                "refractive_index": self.fiber.refractive_index,
                "poisson_ratio": self.fiber.poisson_ratio,
                "p11": self.fiber.p11,
                "p12": self.fiber.p12,
                "attenuation_db_per_km": self.fiber.attenuation_db_per_km,
                "light_speed_fiber_mps": self.fiber.light_speed_fiber_mps,
            },
            "frame": {
                "pilot_period": self.frame.pilot_period,
                "pilot_amplitude": self.frame.pilot_amplitude,
                "sync_length": int(self.frame.sync_word.size),
                "symbols_per_frame": self.frame.symbols_per_frame,
            },
            "channel": {
                "castdown_db": self.channel.castdown_db,
                "activity_threshold_rad_s": self.channel.activity_threshold_rad_s,
            },
            "sensing": {
                "suspend_step_rad": self.sensing.suspend_step_rad,
                "gauge_length_m": self.sensing.gauge_length_m,
                "castdown_threshold_db": self.sensing.castdown_threshold_db,
                "splitting_threshold_db": self.sensing.splitting_threshold_db,
                "localize": self.sensing.localize,
                "attenuation": _attenuation_to_dict(attenuation),
            },
            "geometry": {
                "center_position": list(self.geometry.center_position),
                "wave_speed_mps": self.geometry.wave_speed_mps,
                "fiber_light_speed_mps": self.geometry.fiber_light_speed_mps,
            },
            "nodes": [_node_to_dict(node) for node in sorted(
                self.nodes, key=lambda n: n.node_id
            )],
            "vibration_events": [_event_to_dict(e) for e in self.vibration_events],
            "logger": self.logger,
        }


def _attenuation_to_dict(model: AttenuationModel) -> dict[str, Any]:
    if isinstance(model, ProportionalAttenuation):
        return {"model": "proportional", "scale_per_m": model.scale_per_m}
    if isinstance(model, InverseDistanceAttenuation):
        return {"model": "inverse-distance", "d_ref_m": model.d_ref_m}
    return {"model": type(model).__name__}


def _node_to_dict(node: NodeConfig) -> dict[str, Any]:
    return {
        "id": node.node_id,
        "carrier_hz": node.carrier_hz,
        "baseband_hz": node.baseband_hz,
        "fiber_length_m": node.fiber_length_m,
        "modulation_variance": node.modulation_variance,
        "position_xy": list(node.position_xy),
        "static_phase_rad": node.static_phase_rad,
        "excess_noise_snu": node.excess_noise_snu,
        "pzt": {
            "d_coeff": node.pzt.d_coeff,
            "outer_radius_m": node.pzt.outer_radius_m,
            "thickness_m": node.pzt.thickness_m,
            "wound_fiber_m": node.pzt.wound_fiber_m,
            "hysteresis": node.pzt.hysteresis is not None,
        },
    }


def _event_to_dict(event: VibrationEvent) -> dict[str, Any]:
    waveform = event.waveform
    return {
        "nodes": list(event.nodes),
        "source_xy": list(event.source_xy) if event.source_xy is not None else None,
        "magnitude_rad": event.magnitude_rad,
        "origin_s": event.origin_s,
        "waveform": {
            "kind": waveform.kind,
            "frequency_hz": waveform.frequency_hz,
            "amplitude_v": waveform.amplitude_v,
            "amplitude_rad": waveform.amplitude_rad,
            "width_s": waveform.width_s,
        },
    }


def bundled_scenario_path(name: str) -> Path:
    """Path of a scenario shipped with the package."""
    stem = name.removesuffix(".yaml")
    return Path(str(resources.files(BUNDLED_PACKAGE).joinpath(f"{stem}.yaml")))


def available_scenarios() -> list[str]:
    """Names of the bundled scenarios."""
    return sorted(
        Path(entry.name).stem
        for entry in resources.files(BUNDLED_PACKAGE).iterdir()
        if entry.name.endswith(".yaml")
    )


def _resolve(source: str | Path) -> Path:
    path = Path(source)
    if path.exists():
        return path
    bundled = bundled_scenario_path(str(source))
    if bundled.exists():
        return bundled
    raise ScenarioError(f"Scenario {source} not found", [f"path: {source}"])


def _read_yaml(path: Path) -> dict[str, Any]:
    try:
        text = path.read_text(encoding="utf-8")
        data = yaml.safe_load(text)
    except OSError as err:
        _LOGGER.error("Cannot read scenario %s: %s", path, err)
        raise ScenarioError(f"Cannot read scenario {path}") from err
    except yaml.YAMLError as err:
        _LOGGER.error("Scenario %s does not parse: %s", path, err)
        raise ScenarioError(f"Scenario {path} does not parse", [str(err)]) from err

    if data is None:
        raise ScenarioError(f"Scenario {path} is empty", ["<root>: no content"])
    if not isinstance(data, dict):
        raise ScenarioError(
            f"Scenario {path} must be a mapping",
            [f"<root>: got {type(data).__name__}"],
        )
    return data


def _describe(error: ErrorDetails) -> str:
    """One "path: message" diagnostic for a schema error."""
    path = "".join(
        f"[{part}]" if isinstance(part, int) else f".{part}" for part in error["loc"]
    ).lstrip(".")
    if error["type"] == "extra_forbidden":
        return f"{path}: unknown key"
    return f"{path or '<root>'}: {error['msg'].removeprefix('Value error, ')}"


def _invalid(path: Path, diagnostics: list[str]) -> NoReturn:
    for message in diagnostics:
        _LOGGER.error("Scenario %s: %s", path, message)
    raise ScenarioError(f"Scenario {path} is invalid", diagnostics)


def _default_sample_rate(nodes: list[NodeConfig]) -> float:
    """Smallest integer multiple of the symbol rate above the Nyquist rate."""
    baseband = nodes[0].baseband_hz
    highest = max(node.carrier_hz + node.occupied_half_width_hz for node in nodes)
    return math.ceil(2 * highest / baseband) * baseband


def _cross_checks(
    parsed: ScenarioFile, nodes: list[NodeConfig], geometry: NetworkGeometry
) -> list[str]:
    """Problems that span several fields of an otherwise valid file."""
    problems = []
    ids = {node.node_id for node in nodes}
    if parsed.network_capacity < len(nodes):
        problems.append(
            f"network_capacity: {parsed.network_capacity} is below the number of "
            f"nodes ({len(nodes)})"
        )
    if len({node.baseband_hz for node in nodes}) > 1:
        problems.append(
            "nodes: all nodes must share one baseband_hz (common symbol clock)"
        )
    for index, event in enumerate(parsed.vibration_events):
        unknown = [n for n in event.nodes if n not in ids]
        if unknown:
            problems.append(f"vibration_events[{index}].nodes: unknown nodes {unknown}")
    try:
        build_registry(nodes)
    except IsaqnError as err:
        problems.append(f"nodes: {err}")
    if any(event.source_xy is not None for event in parsed.vibration_events):
        try:
            geometry.check_solvable()
        except IsaqnError as err:
            problems.append(f"geometry: {err}")
    return problems


def load_scenario(source: str | Path, profile: str | None = None) -> ScenarioConfig:
    """
    Load and validate a scenario file or bundled scenario name.

    Frequencies in the file are paper-scale; the desk-scale profile divides
    carriers, basebands and the sample rate by a thousand.
    """
    path = _resolve(source)
    data = _read_yaml(path)
    try:
        parsed = ScenarioFile.model_validate(data)
    except ValidationError as err:
        _invalid(path, [_describe(error) for error in err.errors()])

    profile = profile or parsed.profile or PROFILE_DESK
    if profile not in PROFILES:
        _invalid(path, [f"profile: must be {PROFILE_PAPER} or {PROFILE_DESK}"])
    factor = DESK_FREQUENCY_SCALE if profile == PROFILE_DESK else 1.0

    try:
        nodes = sorted(
            (section.build(factor) for section in parsed.nodes),
            key=lambda n: n.node_id,
        )
        geometry = parsed.geometry.build(nodes)
    except IsaqnError as err:
        _invalid(path, [f"nodes: {err}"])
    problems = _cross_checks(parsed, nodes, geometry)
    if problems:
        _invalid(path, problems)

    try:
        frame = parsed.frame.build()
        scenario = ScenarioConfig(
            nodes=tuple(nodes),
            geometry=geometry,
            name=parsed.name or path.stem,
            version=parsed.version,
            profile=profile,
            seeds=tuple(parsed.seeds),
            n_symbols=parsed.n_symbols or frame.symbols_per_frame,
            sample_rate_hz=(
                parsed.sample_rate_hz * factor
                if parsed.sample_rate_hz is not None
                else _default_sample_rate(nodes)
            ),
            network_capacity=parsed.network_capacity,
            rep_rate_hz=parsed.rep_rate_hz,
            beta=parsed.beta,
            detector=parsed.detector.build(factor),
            fiber=parsed.fiber.build(),
            frame=frame,
            channel=parsed.channel,
            sensing=parsed.sensing.build(),
            vibration_events=tuple(parsed.vibration_events),
            phase_smoothing=parsed.phase_smoothing,
            estimation_fraction=parsed.estimation_fraction,
            logger=parsed.logger,
        )
    except IsaqnError as err:
        _invalid(path, [str(err)])

    _LOGGER.info(
        "Loaded scenario %s (%s, %s nodes)", scenario.name, profile, len(scenario.nodes)
    )
    return scenario
