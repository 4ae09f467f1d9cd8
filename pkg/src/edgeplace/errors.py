"""Exception types shared across the package."""


class EdgeplaceError(Exception):
    """Base class for errors raised by this package."""


class DomainError(EdgeplaceError, ValueError):
    """An argument violates a documented precondition."""


class SizeCapError(EdgeplaceError):
    """An exhaustive enumeration would exceed its configured cap."""


class TraceFormatError(EdgeplaceError, ValueError):
    """A mobility trace file is malformed or incomplete."""


class ConfigError(EdgeplaceError, ValueError):
    """A scenario config file or override is invalid."""


class InvariantViolation(EdgeplaceError, RuntimeError):
    """An internal invariant failed; indicates a bug, not bad input."""
