"""
Exception hierarchy shared by every memoryscope module.

Numerical errors derive from ``ValueError`` so callers that only care about
"bad input" can keep catching that.
"""


class MemoryScopeError(Exception):
    exit_code: int = 1


class ConfigError(MemoryScopeError, ValueError):
    """Malformed or schema-violating configuration."""

    exit_code = 2

    def __init__(self, message: str, *, location: str | None = None) -> None:
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)


class NumericalError(MemoryScopeError, ValueError):
    exit_code = 3


class StateError(NumericalError):
    """An operator violates the density-matrix invariants."""


class DimensionMismatchError(StateError):
    pass


class DynamicsError(NumericalError):
    pass


class CPTPViolationError(DynamicsError):
    pass


class SurfaceError(NumericalError):
    pass


class MeasureError(NumericalError):
    pass


class ArchiveError(MemoryScopeError, ValueError):
    """Unreadable or malformed binary archive."""
