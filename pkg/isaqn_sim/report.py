"""Structured JSON report and two-column tables for offline plotting."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np

from .exceptions import ReportWriteError
from .network import NodeFailure

if TYPE_CHECKING:
    from collections.abc import Iterable

    from .coordinator import RunArtifacts

_LOGGER = logging.getLogger(__name__)

REPORT_FILE = "report.json"
CAPTURE_FILE = "capture.npy"


def _finite(value: Any) -> Any:
    """Map NaN and infinities to None so the report stays strict JSON."""
    if isinstance(value, dict):
        return {key: _finite(item) for key, item in value.items()}
    if isinstance(value, list | tuple):
        return [_finite(item) for item in value]
    if isinstance(value, float | np.floating):
        return float(value) if math.isfinite(value) else None
    if isinstance(value, np.integer):
        return int(value)
    return value


def _result_dict(result: Any) -> dict[str, Any]:
    if isinstance(result, NodeFailure):
        return {"failed": True, **result.to_dict()}
    return result.to_dict()


def write_table(
    path: Path, header: tuple[str, str], rows: Iterable[tuple[float, float]]
) -> Path:
    """Write a header line followed by value,value rows."""
    try:
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows((repr(float(a)), repr(float(b))) for a, b in rows)
    except OSError as err:
        _LOGGER.error("Cannot write table %s: %s", path, err)
        raise ReportWriteError(f"Cannot write table {path}: {err}") from err
    return path


def _tables(artifacts: RunArtifacts, out_dir: Path) -> list[Path]:
    written = []
    if artifacts.spectrum is not None:
        freqs, psd = artifacts.spectrum
        written.append(
            write_table(out_dir / "spectrum.csv", ("freq_hz", "psd"), zip(freqs, psd))
        )

    for report in artifacts.sensing_reports:
        if isinstance(report, NodeFailure):
            continue
        trace = report.trace
        stem = f"node{report.node_id}"
        written.append(
            write_table(
                out_dir / f"{stem}_phase.csv",
                ("time_s", "phase_rad"),
                zip(trace.time_s, trace.unwrapped_phase_rad),
            )
        )
        written.append(
            write_table(
                out_dir / f"{stem}_length.csv",
                ("time_s", "length_m"),
                zip(trace.time_s, trace.length_change_m),
            )
        )
        if report.psd is not None:
            written.append(
                write_table(
                    out_dir / f"{stem}_psd.csv",
                    ("freq_hz", "psd_rad2_per_hz"),
                    zip(report.psd.freqs_hz, report.psd.psd_rad2_per_hz),
                )
            )

    for label, sweep in sorted(artifacts.skr_sweeps.items()):
        written.append(
            write_table(
                out_dir / f"skr_{label}.csv",
                ("length_m", "key_rate_bps"),
                zip(sweep.lengths_m, (r.k_bits_per_s for r in sweep.reports)),
            )
        )
    return written


def _document(
    artifacts: RunArtifacts, tables: list[Path], out_dir: Path
) -> dict[str, Any]:
    document: dict[str, Any] = {"metadata": artifacts.metadata}
    if artifacts.skr_reports:
        document["skr_reports"] = [_result_dict(r) for r in artifacts.skr_reports]
    if artifacts.sensing_reports:
        document["sensing_reports"] = [
            _result_dict(r) for r in artifacts.sensing_reports
        ]
    if artifacts.event_estimates:
        document["event_estimates"] = [e.to_dict() for e in artifacts.event_estimates]
    if artifacts.localization_error is not None:
        document["localization_error"] = artifacts.localization_error.to_dict()
    if artifacts.skr_sweeps:
        document["skr_sweeps"] = {
            label: {
                "excess_noise": sweep.excess_noise,
                "lengths_m": [float(v) for v in sweep.lengths_m],
                "key_rate_bps": [r.k_bits_per_s for r in sweep.reports],
            }
            for label, sweep in artifacts.skr_sweeps.items()
        }
    if artifacts.precision_reports:
        document["precision_reports"] = [
            r.to_dict() for r in artifacts.precision_reports
        ]
    if tables:
        document["tables"] = sorted(str(p.relative_to(out_dir)) for p in tables)
    if artifacts.waveform_dumps:
        document["waveform_dumps"] = sorted(
            str(p.relative_to(out_dir)) for p in artifacts.waveform_dumps
        )
    return document


def emit_report(
    artifacts: RunArtifacts, out_dir: str | Path, *, dump_waveforms: bool = False
) -> list[Path]:
    """Write report.json plus every table; return the files written."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        _LOGGER.error("Cannot create report directory %s: %s", out_dir, err)
        msg = f"Cannot create report directory {out_dir}: {err}"
        raise ReportWriteError(msg) from err

    tables = _tables(artifacts, out_dir)

    if dump_waveforms and artifacts.capture is not None:
        dump = out_dir / CAPTURE_FILE
        try:
            np.save(dump, artifacts.capture.detected.samples)
        except OSError as err:
            _LOGGER.error("Cannot dump capture to %s: %s", dump, err)
            raise ReportWriteError(f"Cannot dump capture to {dump}: {err}") from err
        artifacts.waveform_dumps.append(dump)

    report = out_dir / REPORT_FILE
    document = _document(artifacts, tables, out_dir)
    try:
        report.write_text(
            json.dumps(_finite(document), sort_keys=True, indent=2, allow_nan=False)
            + "\n",
            encoding="utf-8",
        )
    except OSError as err:
        _LOGGER.error("Cannot write report %s: %s", report, err)
        raise ReportWriteError(f"Cannot write report {report}: {err}") from err

    _LOGGER.info("Wrote %s and %s tables to %s", REPORT_FILE, len(tables), out_dir)
    return [report, *tables, *artifacts.waveform_dumps]
