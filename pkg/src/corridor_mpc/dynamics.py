"""Discrete-time double-integrator vehicle model with state-dependent bounds.

State: (x, y, vx, vy) — longitudinal/lateral position and speed.
Control: (ux, uy) — longitudinal/lateral acceleration, held constant over
each step of duration T (zero-order hold):

    x'  = x + vx*T + ux*T^2/2
    y'  = y + vy*T + uy*T^2/2
    vx' = vx + ux*T
    vy' = vy + uy*T

The longitudinal lower bound max(-vx/T, ux_min) keeps vx nonnegative; the
lateral bounds are constructed so that applying them lands the next lateral
position exactly on a given boundary value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PinchedCorridor


@dataclass(frozen=True)
class EgoState:
    """Ego kinematic state."""

    x: float  # longitudinal position [m]
    y: float  # lateral position [m]
    vx: float  # longitudinal speed [m/s], kept >= 0 by the lower control bound
    vy: float  # lateral speed [m/s]

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.vx, self.vy])

    @staticmethod
    def from_array(z: np.ndarray) -> "EgoState":
        return EgoState(float(z[0]), float(z[1]), float(z[2]), float(z[3]))


@dataclass(frozen=True)
class Control:
    """Acceleration pair applied over one time step."""

    ux: float  # longitudinal acceleration [m/s^2]
    uy: float  # lateral acceleration [m/s^2]

    def as_array(self) -> np.ndarray:
        return np.array([self.ux, self.uy])


@dataclass(frozen=True)
class VehicleLimits:
    """Actuation limits. uy_abs_max is an optional symmetric comfort bound."""

    ux_min: float = -6.0  # [m/s^2], < 0
    ux_max: float = 3.0  # [m/s^2], > 0
    T: float = 0.25  # step duration [s]
    uy_abs_max: float | None = None

    def __post_init__(self) -> None:
        if not (self.ux_min < 0.0 < self.ux_max):
            raise ValueError(f"need ux_min < 0 < ux_max, got [{self.ux_min}, {self.ux_max}]")
        if self.T <= 0.0:
            raise ValueError(f"step duration must be positive, got {self.T}")
        if self.uy_abs_max is not None and self.uy_abs_max <= 0.0:
            raise ValueError("uy_abs_max must be positive when set")


def step(s: EgoState, u: Control, T: float) -> EgoState:
    """Integrate one step of the double integrator (exact zero-order hold)."""
    return EgoState(
        x=s.x + s.vx * T + 0.5 * u.ux * T * T,
        y=s.y + s.vy * T + 0.5 * u.uy * T * T,
        vx=s.vx + u.ux * T,
        vy=s.vy + u.uy * T,
    )


def state_matrices(T: float) -> tuple[np.ndarray, np.ndarray]:
    """Jacobians (A, B) of the step map; exact because the map is affine."""
    A = np.array(
        [
            [1.0, 0.0, T, 0.0],
            [0.0, 1.0, 0.0, T],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    B = np.array(
        [
            [0.5 * T * T, 0.0],
            [0.0, 0.5 * T * T],
            [T, 0.0],
            [0.0, T],
        ]
    )
    return A, B


def longitudinal_bounds(s: EgoState, lim: VehicleLimits) -> tuple[float, float]:
    """(lo, hi) for ux at this state.

    hi is the constant acceleration capability; lo = max(-vx/T, ux_min) so one
    full braking step never crosses zero longitudinal speed.
    """
    lo = max(-s.vx / lim.T, lim.ux_min)
    return lo, lim.ux_max


def lateral_bounds(s: EgoState, y_upper: float, y_lower: float, T: float) -> tuple[float, float]:
    """(lo, hi) for uy such that the next lateral position lands inside
    [y_lower, y_upper]; applying hi lands exactly on y_upper, lo on y_lower.

    Raises PinchedCorridor when the band is empty (y_lower >= y_upper).
    """
    if y_lower >= y_upper:
        raise PinchedCorridor(
            f"empty lateral band at x={s.x:.2f}: [{y_lower:.3f}, {y_upper:.3f}]",
            interval=(s.x, s.x),
        )
    hi = 2.0 * ((y_upper - s.y) - s.vy * T) / (T * T)
    lo = 2.0 * ((y_lower - s.y) - s.vy * T) / (T * T)
    return lo, hi
