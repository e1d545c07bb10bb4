"""Sigmoid safety corridors around obstacle vehicles.

Each obstacle contributes a boundary curve built from the difference of two
logistic transitions centered at its rear (swp1) and front (swp2) switch
points. Between the switch points the curve holds a plateau at the obstacle's
near edge offset by the safety margins; beyond them it returns to the road
edge. An obstacle's orientation flag routes the corridor below it (lam = +1,
the curve caps the upper boundary) or above it (lam = -1, the curve lifts the
lower boundary). Per-step boundaries aggregate over obstacles by pointwise
min/max against the road-edge limits.

Because the corridor constrains the ego *center*, obstacle footprints are
inflated by the ego half-extents carried in the config before margins are
applied; with zero ego extents the formulas reduce to the raw footprint case.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .dynamics import EgoState
from .errors import MarginOverflow, PinchedCorridor


@dataclass(frozen=True)
class RoadGeometry:
    """Straight multi-lane road segment; lanes indexed bottom-up from y=0."""

    lane_width: float
    n_lanes: int

    def __post_init__(self) -> None:
        if self.n_lanes < 2:
            raise ValueError(f"need at least 2 lanes, got {self.n_lanes}")
        if self.lane_width <= 0.0:
            raise ValueError(f"lane width must be positive, got {self.lane_width}")

    @property
    def width(self) -> float:
        """Total road width r_w = n_lanes * lane_width."""
        return self.n_lanes * self.lane_width

    def lane_center(self, lane: int) -> float:
        return (lane + 0.5) * self.lane_width

    def lane_of(self, y: float) -> int:
        return int(min(self.n_lanes - 1, max(0, math.floor(y / self.lane_width))))


@dataclass(frozen=True)
class Obstacle:
    """Surrounding vehicle: center pose, speed, footprint, orientation flag.

    lam = +1 routes the corridor below the obstacle, -1 above it; None until
    the reasoner assigns it.
    """

    x: float
    y: float
    vx: float
    vy: float
    length: float = 4.5
    width: float = 1.8
    lam: int | None = None

    def __post_init__(self) -> None:
        if self.length <= 0.0 or self.width <= 0.0:
            raise ValueError("obstacle footprint must have positive extent")
        if self.lam not in (None, 1, -1):
            raise ValueError(f"lam must be +1 or -1, got {self.lam}")


@dataclass(frozen=True)
class SigmoidParams:
    """One obstacle's boundary curve parameters."""

    slp: float  # steepness [1/m]
    swp1: float  # rear switch point [m]
    swp2: float  # front switch point [m]
    plateau: float  # boundary value alongside the obstacle [m]

    def __post_init__(self) -> None:
        if self.slp <= 0.0:
            raise ValueError(f"steepness must be positive, got {self.slp}")
        if not self.swp1 < self.swp2:
            raise ValueError(f"need swp1 < swp2, got {self.swp1} >= {self.swp2}")


@dataclass(frozen=True)
class CorridorConfig:
    """Margins and shape parameters for corridor construction.

    base_margin/headway set the longitudinal clearance between a switch point
    and the (ego-inflated) obstacle footprint; lateral_margin is the clearance
    between the plateau and the inflated footprint edge. slp is a lower bound
    on steepness: construction steepens a curve whenever needed to keep the
    boundary within lateral_margin of the plateau at the footprint corners,
    so the corridor band never touches an inflated footprint.
    """

    slp: float = 1.5  # [1/m]
    base_margin: float = 2.0  # [m] longitudinal clearance at zero closing speed
    headway: float = 0.5  # [s] extra clearance per m/s of closing speed
    lateral_margin: float = 0.3  # [m]
    ego_half_width: float = 0.0  # [m] inflate footprints for the ego body
    ego_half_length: float = 0.0  # [m]
    edge_offset: float | None = None  # road-edge offset; None -> lane_width/2
    grid_points: int = 128  # pinch-check resolution over the evaluation span

    def road_edge_offset(self, road: RoadGeometry) -> float:
        return self.edge_offset if self.edge_offset is not None else 0.5 * road.lane_width


Side = Literal["upper", "lower"]


def _sigmoid(z):
    """Numerically stable logistic, scalar or ndarray."""
    if isinstance(z, np.ndarray):
        out = np.empty_like(z, dtype=float)
        pos = z >= 0.0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def sigmoid_boundary(x, p: SigmoidParams, road: RoadGeometry, side: Side):
    """Evaluate one boundary curve at x (scalar or ndarray).

    upper: r_w - A*sig(slp*(x-swp1)) + A*sig(slp*(x-swp2)),  A = r_w - plateau
    lower:       A*sig(slp*(x-swp1)) - A*sig(slp*(x-swp2)),  A = plateau

    Both sides use a difference of sigmoids so the curve returns to the road
    edge beyond swp2.
    """
    s1 = _sigmoid(p.slp * (x - p.swp1))
    s2 = _sigmoid(p.slp * (x - p.swp2))
    if side == "upper":
        amp = road.width - p.plateau
        return road.width - amp * s1 + amp * s2
    amp = p.plateau
    return amp * s1 - amp * s2


def sigmoid_boundary_slope(x, p: SigmoidParams, road: RoadGeometry, side: Side):
    """d/dx of sigmoid_boundary; used for constraint linearization."""
    s1 = _sigmoid(p.slp * (x - p.swp1))
    s2 = _sigmoid(p.slp * (x - p.swp2))
    d1 = p.slp * s1 * (1.0 - s1)
    d2 = p.slp * s2 * (1.0 - s2)
    if side == "upper":
        amp = road.width - p.plateau
        return -amp * d1 + amp * d2
    amp = p.plateau
    return amp * d1 - amp * d2


def obstacle_sigmoid_params(
    o: Obstacle, ego: EgoState, road: RoadGeometry, cfg: CorridorConfig
) -> SigmoidParams:
    """Build the sigmoid parameters for one obstacle with an assigned lam.

    Longitudinal margin = base_margin + headway*|relative speed|, applied on
    both sides beyond the ego-inflated footprint. Raises MarginOverflow when
    the plateau leaves the open road interval.
    """
    if o.lam is None:
        raise ValueError("obstacle has no lambda assignment")
    clearance = cfg.base_margin + cfg.headway * abs(ego.vx - o.vx)
    half_len = 0.5 * o.length + cfg.ego_half_length
    swp1 = o.x - half_len - clearance
    swp2 = o.x + half_len + clearance
    half_wid = 0.5 * o.width + cfg.ego_half_width
    if o.lam == 1:
        plateau = o.y - half_wid - cfg.lateral_margin
        amp = road.width - plateau
    else:
        plateau = o.y + half_wid + cfg.lateral_margin
        amp = plateau
    if not (0.0 < plateau < road.width):
        raise MarginOverflow(
            f"plateau {plateau:.3f} outside (0, {road.width:.3f}) "
            f"for obstacle at y={o.y:.2f} with lam={o.lam}"
        )
    # Steepen when the configured slope would let the sigmoid tail eat the
    # whole lateral margin at the inflated footprint corners: each tail stays
    # below lateral_margin/2 because sig(-z) < exp(-z).
    slp = cfg.slp
    if amp > 0.5 * cfg.lateral_margin:
        slp = max(slp, math.log(2.0 * amp / cfg.lateral_margin) / clearance)
    return SigmoidParams(slp=slp, swp1=swp1, swp2=swp2, plateau=plateau)


@dataclass(frozen=True)
class CorridorStep:
    """Boundary evaluators for one horizon step."""

    road: RoadGeometry
    y_floor: float  # road-edge lower limit
    y_ceil: float  # road-edge upper limit
    upper_curves: tuple[SigmoidParams, ...]  # from lam = +1 obstacles
    lower_curves: tuple[SigmoidParams, ...]  # from lam = -1 obstacles

    def upper(self, x):
        """Upper boundary: pointwise min of the road limit and all lam=+1 curves."""
        if isinstance(x, np.ndarray):
            val = np.full(x.shape, self.y_ceil, dtype=float)
            for p in self.upper_curves:
                np.minimum(val, sigmoid_boundary(x, p, self.road, "upper"), out=val)
            return val
        val = self.y_ceil
        for p in self.upper_curves:
            val = min(val, sigmoid_boundary(x, p, self.road, "upper"))
        return val

    def lower(self, x):
        """Lower boundary: pointwise max of the road limit and all lam=-1 curves."""
        if isinstance(x, np.ndarray):
            val = np.full(x.shape, self.y_floor, dtype=float)
            for p in self.lower_curves:
                np.maximum(val, sigmoid_boundary(x, p, self.road, "lower"), out=val)
            return val
        val = self.y_floor
        for p in self.lower_curves:
            val = max(val, sigmoid_boundary(x, p, self.road, "lower"))
        return val

    def bounds(self, x: float) -> tuple[float, float]:
        return self.lower(x), self.upper(x)

    def bounds_and_slopes(self, x: float) -> tuple[float, float, float, float]:
        """(lower, dlower/dx, upper, dupper/dx) with the active branch's slope."""
        up, up_slope = self.y_ceil, 0.0
        for p in self.upper_curves:
            v = sigmoid_boundary(x, p, self.road, "upper")
            if v < up:
                up, up_slope = v, sigmoid_boundary_slope(x, p, self.road, "upper")
        lo, lo_slope = self.y_floor, 0.0
        for p in self.lower_curves:
            v = sigmoid_boundary(x, p, self.road, "lower")
            if v > lo:
                lo, lo_slope = v, sigmoid_boundary_slope(x, p, self.road, "lower")
        return lo, lo_slope, up, up_slope


@dataclass(frozen=True)
class CorridorSpec:
    """Per-horizon-step boundary evaluators (step 0 = current cycle time)."""

    steps: tuple[CorridorStep, ...]

    def __len__(self) -> int:
        return len(self.steps)

    def step(self, k: int) -> CorridorStep:
        # Beyond the built horizon, reuse the last step (constant-velocity
        # extrapolation already baked into its obstacle poses).
        return self.steps[min(k, len(self.steps) - 1)]


def corridor_at(spec: CorridorSpec, k: int, x: float) -> tuple[float, float]:
    """(lower, upper) boundary values at step k, longitudinal position x."""
    return spec.step(k).bounds(x)


def aggregate_corridor(
    obstacles_at_k: Sequence[tuple[Obstacle, SigmoidParams]],
    road: RoadGeometry,
    cfg: CorridorConfig,
    eval_span: tuple[float, float] | None = None,
) -> CorridorStep:
    """Combine per-obstacle curves into one step's corridor.

    When eval_span is given, the band is validated on a grid over it and
    PinchedCorridor (with the pinch interval) is raised if the lower boundary
    meets the upper one anywhere.
    """
    off = cfg.road_edge_offset(road)
    uppers = tuple(p for o, p in obstacles_at_k if o.lam == 1)
    lowers = tuple(p for o, p in obstacles_at_k if o.lam == -1)
    step = CorridorStep(
        road=road,
        y_floor=off,
        y_ceil=road.width - off,
        upper_curves=uppers,
        lower_curves=lowers,
    )
    if eval_span is not None:
        xs = np.linspace(eval_span[0], eval_span[1], cfg.grid_points)
        gap = step.upper(xs) - step.lower(xs)
        bad = gap <= 0.0
        if bad.any():
            idx = np.flatnonzero(bad)
            raise PinchedCorridor(
                f"corridor pinched over x in [{xs[idx[0]]:.2f}, {xs[idx[-1]]:.2f}]",
                interval=(float(xs[idx[0]]), float(xs[idx[-1]])),
            )
    return step


def write_corridor_csv(step: CorridorStep, span: tuple[float, float], n: int, path) -> None:
    """Dump sampled (x, lower, upper) rows for external plotting."""
    xs = np.linspace(span[0], span[1], n)
    lo = step.lower(xs)
    up = step.upper(xs)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "lower", "upper"])
        for i in range(n):
            writer.writerow([f"{xs[i]:.6f}", f"{lo[i]:.6f}", f"{up[i]:.6f}"])
