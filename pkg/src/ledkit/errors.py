"""Exception hierarchy shared across the package.

Exit-code mapping used by the CLI: usage/config problems -> 2,
numerical failures -> 3, resource caps -> 4.
"""


class LedkitError(Exception):
    """Base class for all package errors."""


class UsageError(LedkitError):
    """Invalid arguments, config entries, or mismatched inputs."""


class CoordinateError(UsageError):
    """A lattice coordinate lies outside the geometry."""


class ParameterError(UsageError):
    """A parameter violates its documented range."""


class BasisMismatchError(UsageError):
    """An observable or decoder was applied in the wrong measurement basis."""


class GeometryMismatchError(UsageError):
    """Two objects live on incompatible geometries."""


class ParseError(UsageError):
    """A snapshot file could not be parsed; carries a line/record locator."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class PlacementError(UsageError):
    """No valid placement of an observable under the requested margin."""


class InsufficientDataError(UsageError):
    """Too few usable points for a fit."""


class NumericalError(LedkitError):
    """Numerical procedures that failed to produce a trustworthy value."""


class ConvergenceError(NumericalError):
    """Iteration hit its cap before reaching tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class DegenerateWeightError(NumericalError):
    """All conditional weights vanished during sampling."""


class InfeasibleSyndromeError(NumericalError):
    """Requested syndrome cannot be realized on this geometry."""


class BracketingError(NumericalError):
    """Root bracketing interval does not change sign."""


class ResourceCapError(LedkitError):
    """A hard resource cap (bond dimension, matching size) was exceeded."""


class LayerCountError(ResourceCapError):
    """Geometry exhausted before the schedule finished."""
