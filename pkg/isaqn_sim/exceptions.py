"""Error types raised by the ISAQN simulator."""


class IsaqnError(Exception):
    """Base class for simulator errors."""

    kind = "error"


class InvalidArgumentError(IsaqnError, ValueError):
    """An argument is outside its valid range."""

    kind = "invalid-argument"


class InvalidSampleRateError(InvalidArgumentError):
    """Sample rate violates the Nyquist condition for a band."""

    kind = "invalid-sample-rate"


class InsufficientDataError(IsaqnError):
    """Input is too short for the requested estimate."""

    kind = "insufficient-data"


class BandConflictError(IsaqnError):
    """Two nodes requested overlapping frequency bands."""

    kind = "band-conflict"


class DuplicateNodeError(IsaqnError):
    """A node id was registered twice."""

    kind = "duplicate-node"


class IllegalBandError(IsaqnError):
    """A band was requested that is not registered with the center node."""

    kind = "illegal-band"


class SyncFailureError(IsaqnError):
    """Frame synchronization found no clear correlation peak."""

    kind = "sync-failure"


class AlignmentError(IsaqnError):
    """Transmitted and received sequences are not aligned."""

    kind = "alignment-error"


class PhaseEstimateUnreliableError(IsaqnError):
    """Pilot SNR is too low for a phase estimate."""

    kind = "phase-estimate-unreliable"


class BaselineRequiredError(IsaqnError):
    """Spectrum monitoring was asked to run without a baseline."""

    kind = "baseline-required"


class NoCommonEventError(IsaqnError):
    """Two vibration traces do not share a common event."""

    kind = "no-common-event"


class LocalizationFailureError(IsaqnError):
    """The localization solver did not converge to a consistent source."""

    kind = "localization-failure"


class GeometryError(IsaqnError):
    """Node geometry cannot support localization."""

    kind = "geometry-error"


class InvalidModelError(IsaqnError):
    """An attenuation model returned an unusable value."""

    kind = "invalid-model"


class ReportWriteError(IsaqnError):
    """A report could not be written."""

    kind = "io-error"


class NodeFailedError(IsaqnError):
    """A per-node pipeline failed."""

    kind = "node-failure"

    def __init__(self, message: str, node_id: int, cause_kind: str) -> None:
        """Initialize with the failing node and the underlying error kind."""
        super().__init__(message)
        self.node_id = node_id
        self.cause_kind = cause_kind


class ScenarioError(IsaqnError):
    """A scenario file failed to parse or validate."""

    kind = "config-error"

    def __init__(self, message: str, diagnostics: list[str] | None = None) -> None:
        """Initialize with field-level diagnostics."""
        self.diagnostics = diagnostics or []
        if self.diagnostics:
            message = f"{message}: " + "; ".join(self.diagnostics)
        super().__init__(message)
