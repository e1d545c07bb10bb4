"""Receding-horizon driver around the corridor-constrained solver.

Each cycle: predict obstacle motion over the horizon, assign orientation
values, build the per-step corridor, solve the OCP warm-started from the
shifted previous solution, apply the first control, advance the world one
step, repeat. Solver or corridor failures degrade to straight-line maximal
comfortable braking for that cycle.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .corridor import (
    CorridorConfig,
    CorridorSpec,
    CorridorStep,
    Obstacle,
    RoadGeometry,
    aggregate_corridor,
    obstacle_sigmoid_params,
)
from .ddp import OcpDefinition, SolveResult, solve
from .dynamics import Control, EgoState, VehicleLimits, step as dyn_step
from .errors import AllPinched, MarginOverflow, NotConverged, PinchedCorridor
from .reasoner import (
    DrivingConditionSummary,
    LambdaAssignment,
    LlmConfig,
    ReasonerConfig,
    decide_lambdas,
    llm_decide,
)

LATERAL_DECAY_S = 2.0  # predicted obstacle lateral speed decays to zero over this


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 40
    dt: float = 0.25
    replan_period: int = 1  # cycles between solves
    warm_start: bool = True
    weights: tuple[float, float, float, float] = (0.4, 1.0, 0.6, 1.2)
    limits: VehicleLimits = field(default_factory=VehicleLimits)
    margins: CorridorConfig = field(default_factory=CorridorConfig)
    reasoner: str = "rules"  # "rules" | "llm"
    llm: LlmConfig | None = None
    lane_locked: bool = False
    max_iters: int = 50
    max_solve_time_s: float | None = None

    def __post_init__(self) -> None:
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")
        if self.replan_period < 1:
            raise ValueError("replan period must be >= 1")
        if self.reasoner not in ("rules", "llm"):
            raise ValueError(f"unknown reasoner mode {self.reasoner!r}")
        if self.reasoner == "llm" and self.llm is None:
            raise ValueError("llm reasoner mode needs an LlmConfig")
        if self.dt != self.limits.T:
            raise ValueError(f"dt {self.dt} disagrees with limits.T {self.limits.T}")


@dataclass(frozen=True)
class World:
    """Planner view of one instant: road, ego pose/footprint, obstacles."""

    road: RoadGeometry
    ego: EgoState
    ego_length: float
    ego_width: float
    v_desired: float
    speed_limit: float
    obstacles: tuple[Obstacle, ...]


@dataclass(frozen=True)
class LaneChangeScript:
    """Scripted obstacle lane change: linear lateral drift over a window."""

    t_start: float
    t_end: float
    y_target: float


@dataclass
class CycleRecord:
    t: float
    state: EgoState  # ego state the cycle planned from
    control: Control  # applied control
    assignment: tuple[int, ...]
    solve_ms: float
    iterations: int
    status: str  # "ok" | "pinched" | "solver-failure"
    band: tuple[float, float] | None  # corridor interval at the landing position
    next_y: float  # landing lateral position


@dataclass
class ClosedLoopTrace:
    records: list[CycleRecord]
    status: str  # "completed" | "collision" | "pinched" | "solver-failure"
    road: RoadGeometry
    corridors: list[CorridorSpec | None] = field(default_factory=list)

    @property
    def collided(self) -> bool:
        return self.status == "collision"

    def mean_vx(self) -> float:
        if not self.records:
            return 0.0
        return float(np.mean([r.state.vx for r in self.records]))


@dataclass(frozen=True)
class CycleResult:
    control: Control
    status: str
    assignment: tuple[int, ...]
    solve_ms: float
    iterations: int
    result: SolveResult | None
    corridor: CorridorSpec | None
    band: tuple[float, float] | None
    next_y: float


def predict_obstacles(
    obstacles: Sequence[Obstacle], road: RoadGeometry, horizon: int, T: float
) -> list[tuple[Obstacle, ...]]:
    """Constant-velocity extrapolation over horizon+1 steps.

    Lateral speed decays to zero over LATERAL_DECAY_S so an obstacle finishing
    a lane change is not predicted off the road; positions are clamped to the
    road interior regardless.
    """
    out: list[tuple[Obstacle, ...]] = []
    ys = [o.y for o in obstacles]
    for k in range(horizon + 1):
        t = k * T
        row = []
        for i, o in enumerate(obstacles):
            vy = o.vy * max(0.0, 1.0 - t / LATERAL_DECAY_S)
            y = min(max(ys[i], 0.5 * o.width), road.width - 0.5 * o.width)
            row.append(replace(o, x=o.x + o.vx * t, y=y, vy=vy))
            ys[i] += vy * T
        out.append(tuple(row))
    return out


def collision_check(
    ego: EgoState, ego_length: float, ego_width: float, obstacles: Sequence[Obstacle]
) -> bool:
    """Open-interval axis-aligned rectangle overlap; touching edges do not count."""
    for o in obstacles:
        if abs(ego.x - o.x) < 0.5 * (ego_length + o.length) and abs(ego.y - o.y) < 0.5 * (
            ego_width + o.width
        ):
            return True
    return False


def _braking_control(ego: EgoState, lim: VehicleLimits) -> Control:
    return Control(max(-ego.vx / lim.T, lim.ux_min), 0.0)


def _lane_lock(step: CorridorStep, road: RoadGeometry, lane: int, offset: float) -> CorridorStep:
    lo = lane * road.lane_width + offset
    hi = (lane + 1) * road.lane_width - offset
    return replace(step, y_floor=max(step.y_floor, lo), y_ceil=min(step.y_ceil, hi))


def _check_band(step: CorridorStep, span: tuple[float, float], n: int) -> None:
    xs = np.linspace(span[0], span[1], n)
    gap = step.upper(xs) - step.lower(xs)
    bad = gap <= 0.0
    if bad.any():
        idx = np.flatnonzero(bad)
        raise PinchedCorridor(
            f"corridor pinched over x in [{xs[idx[0]]:.2f}, {xs[idx[-1]]:.2f}]",
            interval=(float(xs[idx[0]]), float(xs[idx[-1]])),
        )


def build_corridor(
    world: World,
    assignment: LambdaAssignment | Sequence[int],
    cfg: MpcConfig,
    predictions: list[tuple[Obstacle, ...]] | None = None,
    locked_lane: int | None = None,
) -> CorridorSpec:
    """Per-step corridor from predicted obstacle poses and an assignment."""
    road = world.road
    margins = _effective_margins(world, cfg)
    if predictions is None:
        predictions = predict_obstacles(world.obstacles, road, cfg.horizon, cfg.dt)
    horizon_t = cfg.horizon * cfg.dt
    reach = world.ego.vx * horizon_t + 0.5 * cfg.limits.ux_max * horizon_t * horizon_t
    span = (world.ego.x, world.ego.x + max(reach, 10.0))
    values = list(assignment)
    steps = []
    for k in range(cfg.horizon + 1):
        pairs = []
        for o, lam in zip(predictions[k], values):
            ob = replace(o, lam=lam)
            pairs.append((ob, obstacle_sigmoid_params(ob, world.ego, road, margins)))
        step = aggregate_corridor(pairs, road, margins, eval_span=None)
        if locked_lane is not None:
            step = _lane_lock(step, road, locked_lane, margins.road_edge_offset(road))
        _check_band(step, span, margins.grid_points)
        steps.append(step)
    return CorridorSpec(tuple(steps))


def _effective_margins(world: World, cfg: MpcConfig) -> CorridorConfig:
    # Corridor bounds constrain the ego center: inflate by the ego half-extents
    # and keep the road-edge offset just wide enough for the body plus margin.
    return replace(
        cfg.margins,
        ego_half_width=0.5 * world.ego_width,
        ego_half_length=0.5 * world.ego_length,
        edge_offset=cfg.margins.edge_offset
        if cfg.margins.edge_offset is not None
        else 0.5 * world.ego_width + cfg.margins.lateral_margin,
    )


def plan_cycle(
    world: World,
    cfg: MpcConfig,
    prev: SolveResult | None = None,
    locked_lane: int | None = None,
) -> CycleResult:
    """One MPC cycle: predict, assign orientations, build corridor, solve.

    On PinchedCorridor, AllPinched, MarginOverflow or NotConverged the cycle
    degrades to maximal comfortable braking with zero lateral input and the
    failure is recorded in the status.
    """
    t0 = time.perf_counter()
    ego, road = world.ego, world.road
    predictions = predict_obstacles(world.obstacles, road, cfg.horizon, cfg.dt)
    margins = _effective_margins(world, cfg)
    rcfg = ReasonerConfig(
        horizon_steps=cfg.horizon, dt=cfg.dt, ux_max=cfg.limits.ux_max, margins=margins
    )
    assignment: tuple[int, ...] = ()
    corridor: CorridorSpec | None = None
    status = "ok"
    result: SolveResult | None = None
    try:
        summary = DrivingConditionSummary(
            ego=ego,
            obstacles=world.obstacles,
            road=road,
            speed_limit=world.speed_limit,
            v_desired=world.v_desired,
        )
        if cfg.reasoner == "llm" and cfg.llm is not None:
            assignment = tuple(llm_decide(summary, cfg.llm, rcfg).assignment)
        else:
            assignment = tuple(decide_lambdas(summary, rcfg))
        corridor = build_corridor(world, assignment, cfg, predictions, locked_lane)
        lo0, up0 = corridor.step(0).bounds(ego.x)
        if not (lo0 - 1e-6 <= ego.y <= up0 + 1e-6):
            raise PinchedCorridor(
                f"ego y={ego.y:.3f} outside its own corridor [{lo0:.3f}, {up0:.3f}]"
            )
        warm = None
        if cfg.warm_start and prev is not None and prev.controls.shape == (cfg.horizon, 2):
            warm = np.vstack([prev.controls[1:], prev.controls[-1:]])
        defn = OcpDefinition(
            horizon=cfg.horizon,
            dt=cfg.dt,
            initial=ego,
            weights=cfg.weights,
            v_desired_x=world.v_desired,
            v_desired_y=0.0,
            corridor=corridor,
            limits=cfg.limits,
            max_iters=cfg.max_iters,
        )
        result = solve(defn, warm_start=warm)
        control = Control(float(result.controls[0, 0]), float(result.controls[0, 1]))
    except (PinchedCorridor, AllPinched, MarginOverflow):
        status = "pinched"
        control = _braking_control(ego, cfg.limits)
    except NotConverged:
        status = "solver-failure"
        control = _braking_control(ego, cfg.limits)
        result = None
    solve_ms = (time.perf_counter() - t0) * 1e3

    nxt = dyn_step(ego, control, cfg.dt)
    band = None
    if corridor is not None and status == "ok":
        band = corridor.step(1).bounds(nxt.x)
    return CycleResult(
        control=control,
        status=status,
        assignment=assignment,
        solve_ms=solve_ms,
        iterations=result.iterations if result is not None else 0,
        result=result,
        corridor=corridor,
        band=band,
        next_y=nxt.y,
    )


def _advance_obstacle(o: Obstacle, script: LaneChangeScript | None, t: float, T: float) -> Obstacle:
    x = o.x + o.vx * T
    if script is None or t < script.t_start:
        return replace(o, x=x, y=o.y + o.vy * T)
    if t >= script.t_end:
        return replace(o, x=x, y=script.y_target, vy=0.0)
    vy = (script.y_target - o.y) / max(script.t_end - t, T)
    return replace(o, x=x, y=o.y + vy * T, vy=vy)


def run(scenario, cfg: MpcConfig, duration: float | None = None) -> ClosedLoopTrace:
    """Closed loop: plan, apply the first control, advance obstacles, repeat.

    scenario provides road, ego (state + footprint + v_desired), obstacles
    with optional lane-change scripts, duration, and optionally road_length
    and speed_limit (see sim.Scenario). Terminates at duration, road end, or
    collision.
    """
    road: RoadGeometry = scenario.road
    ego: EgoState = scenario.ego
    obstacles: tuple[Obstacle, ...] = tuple(scenario.obstacles)
    scripts = tuple(getattr(scenario, "scripts", None) or (None,) * len(obstacles))
    speed_limit = getattr(scenario, "speed_limit", None) or scenario.v_desired
    road_length = getattr(scenario, "road_length", None)
    duration = duration if duration is not None else scenario.duration

    locked_lane = road.lane_of(ego.y) if cfg.lane_locked else None
    n_cycles = max(1, round(duration / cfg.dt))
    records: list[CycleRecord] = []
    corridors: list[CorridorSpec | None] = []
    prev: SolveResult | None = None
    last_cycle: CycleResult | None = None
    status = "completed"
    t = 0.0
    for i in range(n_cycles):
        offset = i % cfg.replan_period
        if offset == 0 or last_cycle is None or last_cycle.result is None:
            world = World(
                road=road,
                ego=ego,
                ego_length=scenario.ego_length,
                ego_width=scenario.ego_width,
                v_desired=scenario.v_desired,
                speed_limit=speed_limit,
                obstacles=obstacles,
            )
            last_cycle = plan_cycle(world, cfg, prev, locked_lane)
            prev = last_cycle.result
            control = last_cycle.control
            cycle_status = last_cycle.status
            solve_ms = last_cycle.solve_ms
            iterations = last_cycle.iterations
        else:
            # between replans: consume the next control of the last solution
            k = min(offset, cfg.horizon - 1)
            control = Control(
                float(last_cycle.result.controls[k, 0]), float(last_cycle.result.controls[k, 1])
            )
            cycle_status = last_cycle.status
            solve_ms = 0.0
            iterations = 0
        nxt = dyn_step(ego, control, cfg.dt)
        band = None
        if last_cycle.corridor is not None and cycle_status == "ok":
            k = (i % cfg.replan_period) + 1
            band = last_cycle.corridor.step(k).bounds(nxt.x)
        obstacles = tuple(
            _advance_obstacle(o, s, t, cfg.dt) for o, s in zip(obstacles, scripts)
        )
        records.append(
            CycleRecord(
                t=t,
                state=ego,
                control=control,
                assignment=last_cycle.assignment,
                solve_ms=solve_ms,
                iterations=iterations,
                status=cycle_status,
                band=band,
                next_y=nxt.y,
            )
        )
        corridors.append(last_cycle.corridor)
        ego = nxt
        t += cfg.dt
        if collision_check(ego, scenario.ego_length, scenario.ego_width, obstacles):
            status = "collision"
            break
        if road_length is not None and ego.x >= road_length:
            break
    if status != "collision" and records:
        final = records[-1].status
        if final == "pinched":
            status = "pinched"
        elif final == "solver-failure":
            status = "solver-failure"
    return ClosedLoopTrace(records=records, status=status, road=road, corridors=corridors)
