"""Exception hierarchy shared by all modules."""


class AfcSimError(Exception):
    """Base class for all simulator errors."""


class DomainError(AfcSimError, ValueError):
    """An argument lies outside the domain of an operation."""


class ResolutionError(AfcSimError, ValueError):
    """A frequency or time grid is too coarse for the requested structure."""


class StabilityError(AfcSimError, ValueError):
    """The fixed integration step is too large for the rate equations."""


class ShapeError(AfcSimError, ValueError):
    """Two arrays or grids that must match do not."""


class ConfigurationError(AfcSimError, ValueError):
    """Sampling or window settings are inconsistent (aliasing, truncation)."""


class FitError(AfcSimError, RuntimeError):
    """A least-squares fit failed; ``diagnostics`` carries solver details."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
