"""Command-line entry point: run, skr-sweep, sense, locate and calibrate."""

from __future__ import annotations

import argparse
import asyncio
import logging
import sys
from pathlib import Path
from typing import TYPE_CHECKING

import colorlog
import numpy as np

from .coherent_receiver import detect
from .const import (
    EXIT_CONFIG_ERROR,
    EXIT_NODE_FAILURE,
    EXIT_OK,
    LOGGER,
    MIN_PRECISION_TRIALS,
    PROFILE_DESK,
    PROFILE_PAPER,
)
from .coordinator import NetworkCoordinator, RunArtifacts, run_metadata, sweep_scenario
from .event_localizer import locate
from .exceptions import IsaqnError, ReportWriteError, ScenarioError
from .report import emit_report
from .scenario import available_scenarios, load_scenario
from .signal_core import ComplexWaveform, samples_per_symbol, snu_calibrate
from .spm_sensing import precision_check

if TYPE_CHECKING:
    from collections.abc import Sequence

    from .scenario import ScenarioConfig

_LOGGER = logging.getLogger(__name__)

DEFAULT_SWEEP_EPS = (0.0024, 0.0036, 0.0047)
LOG_FORMAT = "%(log_color)s%(levelname)-8s%(reset)s %(name)s: %(message)s"


def setup_logging(level: int, overrides: dict | None = None) -> None:
    """Attach a colored stream handler to the package logger."""
    if not any(getattr(h, "_isaqn", False) for h in LOGGER.handlers):
        handler = colorlog.StreamHandler()
        handler.setFormatter(colorlog.ColoredFormatter(LOG_FORMAT))
        handler._isaqn = True  # noqa: SLF001
        LOGGER.addHandler(handler)
    LOGGER.setLevel(level)

    if not overrides:
        return
    default = overrides.get("default")
    if default and level == logging.INFO:
        LOGGER.setLevel(str(default).upper())
    for name, name_level in (overrides.get("logs") or {}).items():
        logging.getLogger(name).setLevel(str(name_level).upper())


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "scenario",
        help=f"Scenario file or bundled name ({', '.join(available_scenarios())})",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        help="Run this seed instead of the scenario seeds",
    )
    parser.add_argument(
        "--profile",
        choices=(PROFILE_PAPER, PROFILE_DESK),
        default=None,
        help="Override the scenario profile",
    )
    parser.add_argument(
        "--out", type=Path, default=Path("out"), help="Report directory"
    )


def build_parser() -> argparse.ArgumentParser:
    """Argument parser for every subcommand."""
    parser = argparse.ArgumentParser(
        prog="isaqn", description="Integrated sensing and quantum network simulator"
    )
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="Debug output")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="Warnings only")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Full QKD + sensing + localization run")
    _add_common(run)
    run.add_argument(
        "--dump-waveforms", action="store_true", help="Save the detected capture"
    )

    sweep = commands.add_parser("skr-sweep", help="Key rate against fiber length")
    _add_common(sweep)
    sweep.add_argument("--max-length-km", type=float, default=50.0)
    sweep.add_argument("--steps", type=int, default=51)
    sweep.add_argument(
        "--eps",
        type=float,
        nargs="+",
        default=list(DEFAULT_SWEEP_EPS),
        help="Excess noise values in SNU",
    )

    sense = commands.add_parser("sense", help="Sensing pipeline only")
    _add_common(sense)
    sense.add_argument(
        "--dump-waveforms", action="store_true", help="Save the detected capture"
    )

    where = commands.add_parser("locate", help="Locate a source from given TDOAs")
    _add_common(where)
    where.add_argument(
        "--tdoa",
        type=float,
        nargs="+",
        required=True,
        help="Chained differences dt_12 dt_23 ... in seconds",
    )

    calibrate = commands.add_parser(
        "calibrate", help="SNU calibration and pilot phase precision"
    )
    _add_common(calibrate)
    calibrate.add_argument("--trials", type=int, default=20_000)
    calibrate.add_argument(
        "--amplitudes",
        type=float,
        nargs="+",
        default=[10.0, 31.6, 100.0],
        help="Pilot amplitudes in SNU",
    )
    return parser


def _run(
    scenario: ScenarioConfig, args: argparse.Namespace, seed: int  # noqa: ARG001
) -> RunArtifacts:
    async def _async_run() -> RunArtifacts:
        coordinator = NetworkCoordinator(scenario, seed)
        try:
            return await coordinator.async_run()
        finally:
            await coordinator.async_shutdown()

    return asyncio.run(_async_run())


def _sense(
    scenario: ScenarioConfig, args: argparse.Namespace, seed: int  # noqa: ARG001
) -> RunArtifacts:
    async def _async_sense() -> RunArtifacts:
        coordinator = NetworkCoordinator(scenario, seed)
        artifacts = RunArtifacts(metadata=run_metadata(scenario, seed))
        try:
            artifacts.capture = await coordinator.async_capture()
            artifacts.sensing_reports = await coordinator.async_run_spm()
            await coordinator.async_localize(artifacts)
        finally:
            await coordinator.async_shutdown()
        return artifacts

    return asyncio.run(_async_sense())


def _sweep(
    scenario: ScenarioConfig, args: argparse.Namespace, seed: int
) -> RunArtifacts:
    artifacts = RunArtifacts(metadata=run_metadata(scenario, seed))
    lengths = np.linspace(0.0, args.max_length_km * 1e3, args.steps)
    artifacts.skr_sweeps = sweep_scenario(scenario, lengths, args.eps)
    return artifacts


def _locate(
    scenario: ScenarioConfig, args: argparse.Namespace, seed: int
) -> RunArtifacts:
    artifacts = RunArtifacts(metadata=run_metadata(scenario, seed))
    ids = scenario.geometry.node_ids
    if len(args.tdoa) != len(ids) - 1:
        raise ScenarioError(
            f"Expected {len(ids) - 1} chained TDOA values, got {len(args.tdoa)}",
            [f"--tdoa: {args.tdoa}"],
        )
    differences = {}
    for k, value in enumerate(args.tdoa):
        differences[(ids[k], ids[k + 1])] = value
        differences[(ids[k + 1], ids[k])] = -value
    artifacts.event_estimates.append(locate(differences, scenario.geometry))
    return artifacts


def _calibrate(
    scenario: ScenarioConfig, args: argparse.Namespace, seed: int
) -> RunArtifacts:
    artifacts = RunArtifacts(metadata=run_metadata(scenario, seed))
    if args.trials < MIN_PRECISION_TRIALS:
        raise ScenarioError(
            f"Calibration needs at least {MIN_PRECISION_TRIALS} trials",
            [f"--trials: {args.trials}"],
        )

    sps = samples_per_symbol(scenario.sample_rate_hz, scenario.nodes[0].baseband_hz)
    dark = ComplexWaveform(np.zeros(args.trials * sps), scenario.sample_rate_hz)
    noise = detect(dark, scenario.detector, seed)
    artifacts.metadata["snu_scale"] = snu_calibrate(
        noise, sps, scenario.detector.electronic_noise_snu
    )
    artifacts.precision_reports = [
        precision_check(amplitude, args.trials, seed + index, scenario)
        for index, amplitude in enumerate(args.amplitudes)
    ]
    return artifacts


COMMANDS = {
    "run": _run,
    "skr-sweep": _sweep,
    "sense": _sense,
    "locate": _locate,
    "calibrate": _calibrate,
}
SEEDED_COMMANDS = frozenset({"run", "sense", "calibrate"})


def _seeds(scenario: ScenarioConfig, args: argparse.Namespace) -> list[int]:
    """Seeds to run: the override, every scenario seed, or the first one."""
    if args.seed is not None:
        return [args.seed]
    if args.command in SEEDED_COMMANDS:
        return list(scenario.seeds)
    return [scenario.seeds[0]]


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, run a subcommand and return the exit status."""
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.INFO
    if args.quiet:
        level = logging.WARNING
    setup_logging(level)

    try:
        scenario = load_scenario(args.scenario, profile=args.profile)
    except ScenarioError as err:
        _LOGGER.error("Invalid scenario: %s", err)
        return EXIT_CONFIG_ERROR
    setup_logging(level, scenario.logger)

    seeds = _seeds(scenario, args)
    failed = 0
    try:
        for seed in seeds:
            out = args.out if len(seeds) == 1 else args.out / f"seed_{seed}"
            artifacts = COMMANDS[args.command](scenario, args, seed)
            emit_report(
                artifacts, out, dump_waveforms=getattr(args, "dump_waveforms", False)
            )
            if artifacts.has_failures:
                _LOGGER.warning(
                    "Seed %s: %s node(s) failed", seed, len(artifacts.failures)
                )
                failed += 1
    except (ScenarioError, ReportWriteError) as err:
        _LOGGER.error("%s", err)
        return EXIT_CONFIG_ERROR
    except IsaqnError as err:
        _LOGGER.error("%s failed: %s", args.command, err)
        return EXIT_NODE_FAILURE

    if failed:
        return EXIT_NODE_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
