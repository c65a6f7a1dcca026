"""Exception hierarchy shared by all autokg modules."""


class AutoKGError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(AutoKGError):
    """Invalid or inconsistent configuration (unknown tokenizer, bad config file)."""


class ParameterError(AutoKGError, ValueError):
    """A call-site parameter violates an operation precondition."""


class DegenerateVectorError(ParameterError):
    """A zero-norm vector was passed where an angle is required."""


class ProviderError(AutoKGError):
    """A remote provider failed after exhausting retries.

    `failed_indices` carries the batch positions that were not served,
    when the failure happened inside a batch call.
    """

    def __init__(self, message, failed_indices=None):
        super().__init__(message)
        self.failed_indices = list(failed_indices) if failed_indices else []


class ProtocolError(AutoKGError):
    """A remote provider answered with a malformed or contract-violating payload."""


class FixtureError(AutoKGError):
    """A scripted mock fixture is inconsistent with the request."""


class FixtureMissError(FixtureError):
    """No mock fixture matched the prompt; names the closest pattern."""

    def __init__(self, message, closest_pattern=None):
        super().__init__(message)
        self.closest_pattern = closest_pattern


class SolverError(AutoKGError):
    """An iterative solver did not converge; carries the final residual."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class ConsistencyError(AutoKGError):
    """Artifacts from different builds were combined (corpus hash mismatch)."""


class CorruptArtifactError(AutoKGError):
    """A persisted artifact failed its checksum or could not be parsed."""


class MigrationError(AutoKGError):
    """A persisted artifact has an unsupported format version."""


class PhaseError(AutoKGError):
    """A build pipeline phase failed; names the phase and keeps the cause."""

    def __init__(self, phase, cause):
        super().__init__(f"build phase '{phase}' failed: {cause}")
        self.phase = phase
        self.cause = cause
