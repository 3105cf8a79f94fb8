"""Exception hierarchy shared across the package.

Exit-code contract for the CLI: configuration / usage problems map to
exit code 2, runtime numeric failures to exit code 1.
"""


class StokppError(Exception):
    """Base class for all package errors."""


class ConfigurationError(StokppError):
    """Invalid configuration: bad parameter combination, malformed config file."""


class MisuseError(ConfigurationError):
    """An operation was called outside its contract (wrong kernel kind, empty ensemble, ...)."""


class DomainError(StokppError):
    """Input outside the mathematical domain of an operation (e.g. log of nonpositive values)."""


class NumericError(StokppError):
    """A numeric operation produced an invalid result."""


class InstabilityError(NumericError):
    """Time stepping blew up; carries the step index (and node, if spatial)."""

    def __init__(self, message: str, step: int | None = None, node: int | None = None):
        super().__init__(message)
        self.step = step
        self.node = node


class LevelNotAttainedError(StokppError):
    """Requested marker level lies outside the range of the profile."""


class KernelNotRepresentableError(StokppError):
    """Covariance kernel is not positive semi-definite on the requested grid."""


class InsufficientDomainError(StokppError):
    """The simulated window does not contain the region required by an estimator."""


class ExperimentFailure(StokppError):
    """Too many ensemble paths failed for the summary to be trustworthy."""
