"""Exception types shared across the package."""


class CascadeLabError(Exception):
    """Base class for package-specific errors."""


class ResourceCapError(CascadeLabError):
    """An enumeration or outcome space would exceed its configured cap."""


class UnsupportedLawError(CascadeLabError):
    """A weight law does not support the requested operation (e.g. missing
    analytic moments, or a finite-support enumeration over a continuous law)."""


class VerdictError(CascadeLabError):
    """An operation was invoked in a state it does not accept (e.g. fitting a
    geometric envelope to a profile whose verdict is not 'satisfied')."""


class InconclusiveDataError(CascadeLabError):
    """Computed data resolves neither of the two patterns a check discriminates."""


class ConfigError(CascadeLabError):
    """An experiment configuration failed validation."""
