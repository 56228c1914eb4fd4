"""Exception types shared across the package."""

from __future__ import annotations


class GeoloopError(Exception):
    """Base class for all package-specific errors."""


class NonFiniteState(GeoloopError):
    """Geodesic integrator produced a non-finite state (bad metric callbacks)."""


class ShootingFailed(GeoloopError):
    """Two-point geodesic solver exhausted its restart budget."""


class EndpointMismatch(GeoloopError):
    """Curve concatenation requires the junction breakpoints to agree exactly."""


class RangeError(GeoloopError):
    """Arclength parameter outside [0, length]."""


class IterationBudgetExceeded(GeoloopError):
    """Iterative process hit its sweep budget; carries the partial result."""

    def __init__(self, message: str, partial=None):
        super().__init__(message)
        self.partial = partial


class BoundViolation(GeoloopError):
    """A constructed frame exceeded its certified length bound plus slack."""

    def __init__(self, message: str, measured: float | None = None, allowed: float | None = None):
        super().__init__(message)
        self.measured = measured
        self.allowed = allowed


class HypothesisViolated(GeoloopError):
    """A stable geodesic loop landed in the forbidden length interval.

    This is an empirical refutation of the run parameters, not a crash: the
    offending loop and its length are attached for reporting.
    """

    def __init__(self, loop_length: float, loop=None, step: int | None = None):
        super().__init__(
            f"stable loop of length {loop_length:.6g} violates the gap hypothesis"
        )
        self.loop_length = loop_length
        self.loop = loop
        self.step = step


class SyncFailed(GeoloopError):
    """Family synchronization could not make cut partitions disjoint."""


class MissingSymbol(GeoloopError):
    """A bound formula was evaluated without one of its required parameters."""
