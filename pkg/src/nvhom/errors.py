"""Exception types shared across the package."""


class NvHomError(Exception):
    """Base class for all package errors."""


class DomainError(NvHomError, ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigError(NvHomError, ValueError):
    """A configuration is malformed or physically inconsistent.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class ValidityError(NvHomError, RuntimeError):
    """A simulation was asked to run outside the regime where it is valid."""


class NotFoundError(NvHomError, LookupError):
    """A requested feature (e.g. a dip, a peak) is absent from the data."""


class FitError(NvHomError, RuntimeError):
    """A least-squares fit failed; ``state`` carries the last iterate."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)
