"""Exception types shared across the package."""
from __future__ import annotations


class GridReduceError(Exception):
    """Base class for errors raised by this package."""


class RegularityError(GridReduceError):
    """A matrix that the model requires to be positive definite is not.

    Raised when the eliminated (load-side) block of a Laplacian fails to
    factor, which happens for disconnected graphs, bad partitions, or edge
    weights driven to zero.
    """


class ConvergenceError(GridReduceError):
    """An iterative solve (Newton) failed to reach its tolerance."""

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class SecurityViolation(GridReduceError):
    """An edge angle difference left the secure region (-pi/2, pi/2).

    ``time`` is filled in by the integrators when the violation occurs
    during a simulation.
    """

    def __init__(self, message: str, margin: float, time: float | None = None):
        super().__init__(message)
        self.margin = margin
        self.time = time

    def __str__(self) -> str:  # keep the time visible in CLI output
        base = super().__str__()
        if self.time is not None:
            return f"{base} (at t={self.time:.6g} s)"
        return base


class IncompatibleStateError(GridReduceError):
    """A full-model initial state violates the load power constraint."""

    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


class ScenarioError(GridReduceError):
    """A scenario file is syntactically or semantically invalid."""
