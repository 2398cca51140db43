"""Run coordinator: one capture, per-node pipelines in parallel, merged results."""

from __future__ import annotations

import asyncio
import logging
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Any, TypeVar

import numpy as np

from .const import DEFAULT_MODULATION_VARIANCE_SNU, REPORT_SCHEMA_VERSION
from .event_localizer import EventEstimate, locate, magnitude, tdoa
from .exceptions import IsaqnError, NodeFailedError
from .network import Capture, NodeFailure, simulate_capture
from .qkd_engine import SkrReport, process_qkd_node, skr_sweep
from .spm_sensing import (
    BandStatus,
    PrecisionReport,
    SensingReport,
    measure_band_power,
    monitor_spectrum,
    process_spm_node,
    spectrum_monitor,
)

if TYPE_CHECKING:
    from collections.abc import Callable
    from pathlib import Path

    from .scenario import ScenarioConfig

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True, eq=False)
class SkrSweep:
    """Key rate over a fiber-length grid at one excess noise."""

    lengths_m: np.ndarray
    excess_noise: float
    reports: list[SkrReport]


@dataclass(eq=False)
class RunArtifacts:
    """Everything a run produced."""

    metadata: dict[str, Any]
    skr_reports: list[SkrReport | NodeFailure] = field(default_factory=list)
    sensing_reports: list[SensingReport | NodeFailure] = field(default_factory=list)
    event_estimates: list[EventEstimate] = field(default_factory=list)
    localization_error: NodeFailure | None = None
    skr_sweeps: dict[str, SkrSweep] = field(default_factory=dict)
    precision_reports: list[PrecisionReport] = field(default_factory=list)
    spectrum: tuple[np.ndarray, np.ndarray] | None = None
    waveform_dumps: list[Path] = field(default_factory=list)
    capture: Capture | None = None

    @property
    def failures(self) -> list[NodeFailure]:
        """Per-node hard failures across both pipelines, then localization."""
        failures = [
            result
            for result in (*self.skr_reports, *self.sensing_reports)
            if isinstance(result, NodeFailure)
        ]
        if self.localization_error is not None:
            failures.append(self.localization_error)
        return failures

    @property
    def has_failures(self) -> bool:
        """Whether any node failed."""
        return bool(self.failures)


def run_metadata(scenario: ScenarioConfig, seed: int) -> dict[str, Any]:
    """Metadata block present in every report."""
    from . import __version__  # noqa: PLC0415

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "simulator_version": __version__,
        "scenario": scenario.name,
        "scenario_version": scenario.version,
        "profile": scenario.profile,
        "seed": seed,
        "seeds": list(scenario.seeds),
        "config": scenario.to_dict(),
    }


def sweep_scenario(
    scenario: ScenarioConfig,
    lengths_m: np.ndarray,
    excess_noise: list[float],
) -> dict[str, SkrSweep]:
    """Key rate against fiber length for every excess-noise value."""
    v_a = (
        scenario.nodes[0].modulation_variance
        if scenario.nodes
        else DEFAULT_MODULATION_VARIANCE_SNU
    )
    sweeps = {}
    for eps in excess_noise:
        reports = skr_sweep(
            v_a,
            lengths_m,
            eps,
            scenario.detector,
            scenario.beta,
            scenario.rep_rate_hz,
            scenario.fiber,
            scenario.network_capacity,
        )
        sweeps[f"eps_{eps * 1e3:g}msnu"] = SkrSweep(lengths_m, eps, reports)
    return sweeps


class NetworkCoordinator:
    """Drives the QKD and sensing pipelines of one scenario run."""

    def __init__(self, scenario: ScenarioConfig, seed: int | None = None) -> None:
        """Initialize coordinator."""
        self.scenario = scenario
        self.seed = scenario.seeds[0] if seed is None else seed
        self._capture: Capture | None = None
        self._baseline: dict[int, float] | None = None

    async def async_capture(self) -> Capture:
        """Simulate the capture once and keep it for every pipeline."""
        if self._capture is None:
            _LOGGER.debug(
                "Simulating capture for %s (seed %s)", self.scenario.name, self.seed
            )
            self._capture = await asyncio.to_thread(
                simulate_capture, self.scenario, self.seed
            )
        return self._capture

    async def async_baseline(self) -> dict[int, float]:
        """Per-band power of a vibration-free capture with the same seed."""
        if self._baseline is None:
            quiet = await asyncio.to_thread(
                simulate_capture, self.scenario, self.seed, vibrations=False
            )
            self._baseline = measure_band_power(quiet.detected, quiet.registry)
        return self._baseline

    async def _async_per_node(
        self, label: str, work: Callable[[int], T], node_ids: list[int]
    ) -> list[T | NodeFailure]:
        """Run work for every node in threads and merge in node-id order."""

        def guarded(node_id: int) -> T:
            try:
                return work(node_id)
            except IsaqnError as err:
                _LOGGER.error("%s pipeline failed for node %s: %s", label, node_id, err)
                raise NodeFailedError(
                    f"{label} failed for node {node_id}: {err}", node_id, err.kind
                ) from err

        outcomes = await asyncio.gather(
            *(asyncio.to_thread(guarded, node_id) for node_id in node_ids),
            return_exceptions=True,
        )
        merged: list[T | NodeFailure] = []
        for node_id, outcome in zip(node_ids, outcomes, strict=True):
            if isinstance(outcome, NodeFailedError):
                merged.append(NodeFailure(node_id, outcome.cause_kind, str(outcome)))
            elif isinstance(outcome, BaseException):
                raise outcome
            else:
                merged.append(outcome)
        return merged

    async def async_run_qkd(self) -> list[SkrReport | NodeFailure]:
        """Key rate for every registered node."""
        capture = await self.async_capture()
        return await self._async_per_node(
            "QKD",
            lambda node_id: process_qkd_node(capture, self.scenario, node_id),
            capture.registry.registered_ids(),
        )

    async def async_monitor(self) -> list[BandStatus]:
        """Spectrum monitor verdict for every band."""
        capture = await self.async_capture()
        baseline = await self.async_baseline()
        sensing = self.scenario.sensing
        return await asyncio.to_thread(
            spectrum_monitor,
            capture.detected,
            capture.registry,
            baseline,
            pilot_spacing=capture.layout.pilot_spacing,
            castdown_threshold_db=sensing.castdown_threshold_db,
            splitting_threshold_db=sensing.splitting_threshold_db,
        )

    async def async_run_spm(self) -> list[SensingReport | NodeFailure]:
        """Sensing report for every registered node."""
        capture = await self.async_capture()
        statuses = {status.node_id: status for status in await self.async_monitor()}
        return await self._async_per_node(
            "Sensing",
            lambda node_id: process_spm_node(
                capture, self.scenario, node_id, statuses[node_id]
            ),
            sorted(statuses),
        )

    def localize(
        self, sensing_reports: list[SensingReport | NodeFailure]
    ) -> EventEstimate:
        """Locate the vibration source and its magnitude from sensing traces."""
        traces = {
            report.node_id: report.trace
            for report in sensing_reports
            if isinstance(report, SensingReport)
        }
        geometry = self.scenario.geometry
        estimate = locate(tdoa(traces), geometry)
        try:
            source = magnitude(traces, estimate, self.scenario.sensing.attenuation)
        except IsaqnError as err:
            _LOGGER.warning("Magnitude estimate unavailable: %s", err)
            return estimate
        return replace(estimate, magnitude=source.value)

    async def async_localize(self, artifacts: RunArtifacts) -> None:
        """Localize from the sensing reports, recording a failure in place."""
        if not (self.scenario.has_source_events and self.scenario.sensing.localize):
            return
        try:
            estimate = await asyncio.to_thread(
                self.localize, artifacts.sensing_reports
            )
        except IsaqnError as err:
            _LOGGER.error("Localization failed: %s", err)
            artifacts.localization_error = NodeFailure.from_error(0, err)
        else:
            artifacts.event_estimates.append(estimate)

    async def async_run(self) -> RunArtifacts:
        """Full pipeline: capture, QKD and sensing in parallel, then localization."""
        artifacts = RunArtifacts(metadata=run_metadata(self.scenario, self.seed))
        capture = await self.async_capture()
        artifacts.capture = capture
        artifacts.spectrum = await asyncio.to_thread(monitor_spectrum, capture.detected)

        skr_reports, sensing_reports = await asyncio.gather(
            self.async_run_qkd(), self.async_run_spm()
        )
        suspended = {
            report.node_id
            for report in sensing_reports
            if isinstance(report, SensingReport) and report.qkd_suspended
        }
        artifacts.skr_reports = [
            replace(report, qkd_suspended=True)
            if isinstance(report, SkrReport) and report.node_id in suspended
            else report
            for report in skr_reports
        ]
        artifacts.sensing_reports = sensing_reports

        await self.async_localize(artifacts)

        _LOGGER.info(
            "Run %s finished: %s node failures, %s events",
            self.scenario.name,
            len(artifacts.failures),
            len(artifacts.event_estimates),
        )
        return artifacts

    async def async_shutdown(self) -> None:
        """Release the cached capture."""
        self._capture = None
        self._baseline = None
