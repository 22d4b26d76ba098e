"""Exception types shared across the package."""

from __future__ import annotations


class ScenarioError(ValueError):
    """A scenario file or scenario object violates its invariants."""


class InfeasibleScenarioError(RuntimeError):
    """The accuracy target cannot be met even at the maximum energy budget.

    Carries the worst sensor point index and its feasibility margin when they
    are known, so callers can report where the requirement fails.
    """

    def __init__(
        self,
        message: str,
        worst_sensor_index: int | None = None,
        margin: float | None = None,
    ) -> None:
        super().__init__(message)
        self.worst_sensor_index = worst_sensor_index
        self.margin = margin


class SolverFailureError(RuntimeError):
    """The cone solver stopped without an optimality or infeasibility certificate."""


class SingularFimError(ValueError):
    """Assembled Fisher information is numerically singular (degenerate geometry)."""


class SizeCapError(ValueError):
    """Instance exceeds the exhaustive oracle's size cap."""
