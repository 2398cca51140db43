"""Test the run coordinator."""

import math
from unittest.mock import patch

import numpy as np
import pytest

from isaqn_sim import qkd_engine
from isaqn_sim.coordinator import (
    NetworkCoordinator,
    RunArtifacts,
    run_metadata,
    sweep_scenario,
)
from isaqn_sim.exceptions import NoCommonEventError, SyncFailureError
from isaqn_sim.network import NodeFailure
from isaqn_sim.qkd_engine import SkrReport
from isaqn_sim.scenario import load_scenario
from isaqn_sim.spm_sensing import SensingReport


class TestNetworkCoordinator:
    """Test merging of the per-node pipelines."""

    async def test_qkd_in_node_order(self, small_3node, small_capture):
        """Test QKD reports come back sorted by node id."""
        coordinator = NetworkCoordinator(small_3node, seed=7)
        coordinator._capture = small_capture  # noqa: SLF001

        reports = await coordinator.async_run_qkd()

        assert [report.node_id for report in reports] == [1, 2, 3]
        assert all(isinstance(report, SkrReport) for report in reports)

    async def test_node_failure_is_isolated(self, small_3node, small_capture):
        """Test one failing node becomes a failure record, the others still run."""
        real = qkd_engine.process_qkd_node

        def flaky(capture, scenario, node_id):
            if node_id == 2:
                raise SyncFailureError("no sync peak")
            return real(capture, scenario, node_id)

        coordinator = NetworkCoordinator(small_3node, seed=7)
        coordinator._capture = small_capture  # noqa: SLF001

        with patch("isaqn_sim.coordinator.process_qkd_node", side_effect=flaky):
            reports = await coordinator.async_run_qkd()

        failure = reports[1]
        assert isinstance(failure, NodeFailure)
        assert failure.node_id == 2
        assert failure.kind == "sync-failure"
        assert "node 2" in failure.message
        assert isinstance(reports[0], SkrReport)
        assert isinstance(reports[2], SkrReport)

    async def test_foreign_errors_propagate(self, small_3node, small_capture):
        """Test errors outside the simulator hierarchy are not swallowed."""
        coordinator = NetworkCoordinator(small_3node, seed=7)
        coordinator._capture = small_capture  # noqa: SLF001

        with (
            patch(
                "isaqn_sim.coordinator.process_qkd_node",
                side_effect=RuntimeError("boom"),
            ),
            pytest.raises(RuntimeError, match="boom"),
        ):
            await coordinator.async_run_qkd()

    async def test_run_marks_suspended_nodes(
        self, vibrating_scenario, vibrating_capture
    ):
        """Test a vibrating node's key rate is flagged as suspended."""
        coordinator = NetworkCoordinator(vibrating_scenario, seed=11)
        coordinator._capture = vibrating_capture  # noqa: SLF001

        artifacts = await coordinator.async_run()

        skr = {report.node_id: report for report in artifacts.skr_reports}
        assert skr[2].qkd_suspended
        assert not skr[1].qkd_suspended
        assert not skr[3].qkd_suspended
        assert all(isinstance(r, SensingReport) for r in artifacts.sensing_reports)
        assert not artifacts.has_failures
        assert artifacts.event_estimates == []
        assert artifacts.spectrum is not None

    async def test_capture_is_cached(self, small_3node):
        """Test both pipelines share one capture until shutdown."""
        coordinator = NetworkCoordinator(small_3node, seed=3)

        first = await coordinator.async_capture()
        assert await coordinator.async_capture() is first

        await coordinator.async_shutdown()
        assert coordinator._capture is None  # noqa: SLF001

    async def test_localize_skipped_without_source_events(self, small_3node):
        """Test nothing is located when no event has a source position."""
        coordinator = NetworkCoordinator(small_3node, seed=7)
        artifacts = RunArtifacts(metadata={})

        with patch.object(coordinator, "localize") as localize:
            await coordinator.async_localize(artifacts)

        localize.assert_not_called()
        assert artifacts.event_estimates == []
        assert artifacts.localization_error is None

    async def test_default_seed(self, small_3node):
        """Test the first scenario seed is used when none is given."""
        assert NetworkCoordinator(small_3node).seed == small_3node.seeds[0]


class TestLocalizationRun:
    """Test the localization experiment end to end."""

    async def test_eq_triangle(self):
        """Test the burst source and its magnitude are recovered."""
        scenario = load_scenario("eq_triangle")
        coordinator = NetworkCoordinator(scenario)

        artifacts = await coordinator.async_run()
        await coordinator.async_shutdown()

        assert artifacts.localization_error is None
        estimate = artifacts.event_estimates[0]
        assert math.dist(estimate.position, (8663.72, 5006.0)) < 25.0
        assert estimate.magnitude == pytest.approx(20.0, rel=0.2)


class TestSweepScenario:
    """Test the key-rate sweep helper."""

    def test_keys_and_shape(self, paper_3node):
        """Test one sweep per excess noise, keyed in milli-SNU."""
        lengths = np.linspace(1_000.0, 20_000.0, 5)

        sweeps = sweep_scenario(paper_3node, lengths, [0.0024, 0.0047])

        assert sorted(sweeps) == ["eps_2.4msnu", "eps_4.7msnu"]
        assert len(sweeps["eps_4.7msnu"].reports) == 5
        assert sweeps["eps_2.4msnu"].excess_noise == 0.0024


class TestRunMetadata:
    """Test the report metadata block."""

    def test_fields(self, paper_3node):
        """Test the metadata names the scenario, seed and configuration."""
        metadata = run_metadata(paper_3node, 5)

        assert metadata["scenario"] == "paper_3node"
        assert metadata["seed"] == 5
        assert metadata["profile"] == paper_3node.profile
        assert metadata["config"]["name"] == "paper_3node"
        assert "simulator_version" in metadata


class TestRunArtifacts:
    """Test failure collection."""

    def test_localization_error_counts(self, paper_3node):
        """Test a failed localization makes the run a failure."""
        artifacts = RunArtifacts(metadata=run_metadata(paper_3node, 0))
        assert not artifacts.has_failures

        artifacts.localization_error = NodeFailure.from_error(
            0, NoCommonEventError("flat traces")
        )

        assert artifacts.has_failures
        assert artifacts.failures[0].kind == "no-common-event"
