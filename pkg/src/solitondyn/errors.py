"""Exception hierarchy shared across the package."""


class SolitonError(Exception):
    """Base class for all package errors."""


class DimensionError(SolitonError, ValueError):
    """Operation called on a grid of the wrong dimension."""


class GridMismatchError(SolitonError, ValueError):
    """Two fields live on different grids."""


class DomainError(SolitonError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class IterationLimitError(SolitonError, RuntimeError):
    """An iterative solver hit its iteration cap before converging."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class SolverInstabilityError(SolitonError, RuntimeError):
    """An iterative solver produced an unphysical iterate."""


class IncompatibleSourceError(SolitonError, ValueError):
    """Right-hand side has a component along the operator kernel."""


class BlowupError(SolitonError, RuntimeError):
    """Time stepping produced NaN/inf or runaway amplitude."""

    def __init__(self, message, last_time=None):
        super().__init__(message)
        self.last_time = last_time


class FitDivergenceError(SolitonError, RuntimeError):
    """Modulation fit failed to drive the orthogonality residuals below tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StepRejectedError(SolitonError, RuntimeError):
    """A single ODE step changed the conserved energy by more than allowed."""


class ConfigError(SolitonError, ValueError):
    """Invalid experiment configuration."""


class ObserverError(SolitonError, RuntimeError):
    """An observer callback raised during a run."""
