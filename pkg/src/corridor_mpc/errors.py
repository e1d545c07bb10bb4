"""Exception types shared across the planner stack."""

from __future__ import annotations


class CorridorMpcError(Exception):
    """Base class for all planner errors."""


class PinchedCorridor(CorridorMpcError):
    """Lower boundary meets or exceeds the upper boundary somewhere.

    Signals an infeasible corridor; the caller must widen margins or brake.
    """

    def __init__(self, message: str, interval: tuple[float, float] | None = None):
        super().__init__(message)
        self.interval = interval  # (x_start, x_end) of the pinch, when known


class MarginOverflow(CorridorMpcError):
    """A sigmoid plateau fell outside the open road interval (0, r_w)."""


class AllPinched(CorridorMpcError):
    """Every enumerated lambda assignment produced a pinched corridor."""


class DegenerateQuu(CorridorMpcError):
    """Quu + reg*I not positive definite even after regularization."""


class LineSearchFailed(CorridorMpcError):
    """Backtracking reached the minimum step size without sufficient decrease."""


class NotConverged(CorridorMpcError):
    """Solver hit the iteration cap. Carries the best trajectory found so far."""

    def __init__(self, message: str, result=None):
        super().__init__(message)
        self.result = result


class PlacementFailure(CorridorMpcError):
    """Scenario generator exhausted its rejection-sampling budget."""
