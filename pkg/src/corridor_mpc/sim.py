"""Scenario generation, batch evaluation, and closed-loop metrics.

Scenarios are versioned JSON documents: road geometry, ego initial state and
footprint, obstacle list with optional lane-change scripts, duration and the
generator seed. Generated suites place obstacles at lane centers ahead of the
ego with enough longitudinal stagger (held for the whole run, obstacle speeds
are constant) that corridors of opposite orientation never pinch against
each other.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .corridor import Obstacle, RoadGeometry
from .dynamics import EgoState
from .errors import PlacementFailure
from .mpc import ClosedLoopTrace, LaneChangeScript, MpcConfig, collision_check, run

SCENARIO_VERSION = 1

# generator defaults
LANE_WIDTH = 3.6
V_DESIRED = 15.0
CAR_LENGTH = 4.5
CAR_WIDTH = 1.8
MIN_STAGGER = 25.0  # [m] pairwise longitudinal gap, same or adjacent lane, for all t
EGO_LEAD_GAP = 40.0  # [m] clear distance ahead of the ego at t=0
SPEED_RANGE = (0.5, 0.9)  # obstacle speeds as fractions of v_desired


@dataclass(frozen=True)
class Scenario:
    road: RoadGeometry
    ego: EgoState
    ego_length: float
    ego_width: float
    v_desired: float
    obstacles: tuple[Obstacle, ...]
    scripts: tuple[LaneChangeScript | None, ...] = ()
    duration: float = 15.0
    seed: int | None = None
    road_length: float | None = None
    speed_limit: float | None = None
    name: str = ""

    def __post_init__(self) -> None:
        if not self.scripts:
            object.__setattr__(self, "scripts", (None,) * len(self.obstacles))
        if len(self.scripts) != len(self.obstacles):
            raise ValueError("need one script entry (or None) per obstacle")
        if not (0.0 < self.ego.y < self.road.width):
            raise ValueError("ego starts off the road")
        for o in self.obstacles:
            if not (0.0 < o.y < self.road.width):
                raise ValueError(f"obstacle at y={o.y} starts off the road")
        if collision_check(self.ego, self.ego_length, self.ego_width, self.obstacles):
            raise ValueError("ego overlaps an obstacle at t=0")
        for i, a in enumerate(self.obstacles):
            for b in self.obstacles[i + 1 :]:
                if abs(a.x - b.x) < 0.5 * (a.length + b.length) and abs(a.y - b.y) < 0.5 * (
                    a.width + b.width
                ):
                    raise ValueError("two obstacles overlap at t=0")

    # --- JSON round trip ---------------------------------------------------

    def to_dict(self) -> dict:
        def obstacle_dict(o: Obstacle, s: LaneChangeScript | None) -> dict:
            d = {
                "x": o.x, "y": o.y, "vx": o.vx, "vy": o.vy,
                "length": o.length, "width": o.width,
            }
            if s is not None:
                d["script"] = {
                    "type": "lane_change",
                    "t_start": s.t_start, "t_end": s.t_end, "y_target": s.y_target,
                }
            return d

        return {
            "version": SCENARIO_VERSION,
            "name": self.name,
            "road": {"lane_width": self.road.lane_width, "n_lanes": self.road.n_lanes},
            "ego": {
                "x": self.ego.x, "y": self.ego.y, "vx": self.ego.vx, "vy": self.ego.vy,
                "length": self.ego_length, "width": self.ego_width,
                "v_desired": self.v_desired,
            },
            "obstacles": [obstacle_dict(o, s) for o, s in zip(self.obstacles, self.scripts)],
            "duration": self.duration,
            "seed": self.seed,
            "road_length": self.road_length,
            "speed_limit": self.speed_limit,
        }

    @staticmethod
    def from_dict(data: dict) -> "Scenario":
        version = data.get("version")
        if version != SCENARIO_VERSION:
            raise ValueError(f"unsupported scenario version {version!r}")
        road = RoadGeometry(float(data["road"]["lane_width"]), int(data["road"]["n_lanes"]))
        ego = data["ego"]
        obstacles = []
        scripts: list[LaneChangeScript | None] = []
        for od in data["obstacles"]:
            obstacles.append(
                Obstacle(
                    x=float(od["x"]), y=float(od["y"]),
                    vx=float(od["vx"]), vy=float(od["vy"]),
                    length=float(od.get("length", CAR_LENGTH)),
                    width=float(od.get("width", CAR_WIDTH)),
                )
            )
            sd = od.get("script")
            if sd is None:
                scripts.append(None)
            elif sd.get("type") == "lane_change":
                scripts.append(
                    LaneChangeScript(
                        t_start=float(sd["t_start"]), t_end=float(sd["t_end"]),
                        y_target=float(sd["y_target"]),
                    )
                )
            else:
                raise ValueError(f"unknown obstacle script type {sd.get('type')!r}")
        return Scenario(
            road=road,
            ego=EgoState(float(ego["x"]), float(ego["y"]), float(ego["vx"]), float(ego["vy"])),
            ego_length=float(ego.get("length", CAR_LENGTH)),
            ego_width=float(ego.get("width", CAR_WIDTH)),
            v_desired=float(ego["v_desired"]),
            obstacles=tuple(obstacles),
            scripts=tuple(scripts),
            duration=float(data["duration"]),
            seed=data.get("seed"),
            road_length=data.get("road_length"),
            speed_limit=data.get("speed_limit"),
            name=data.get("name", ""),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @staticmethod
    def load(path) -> "Scenario":
        return Scenario.from_dict(json.loads(Path(path).read_text()))


def _pair_gap_ok(a: Obstacle, b: Obstacle, duration: float, road: RoadGeometry) -> bool:
    """Longitudinal gap between two same/adjacent-lane obstacles stays wide.

    With constant speeds the gap is linear in t, so checking both endpoints
    plus a sign change suffices.
    """
    if abs(road.lane_of(a.y) - road.lane_of(b.y)) > 1:
        return True
    g0 = a.x - b.x
    g1 = g0 + (a.vx - b.vx) * duration
    if g0 == 0.0 or (g0 > 0) != (g1 > 0):
        return False
    return min(abs(g0), abs(g1)) >= MIN_STAGGER


def generate_scenarios(
    lanes: int,
    n_obstacles: int,
    n_scenarios: int,
    seed: int,
    duration: float = 15.0,
    v_desired: float = V_DESIRED,
) -> list[Scenario]:
    """Deterministic random suite: obstacles at lane centers, longitudinal
    stagger at least MIN_STAGGER for the whole run, speeds in SPEED_RANGE of
    the desired speed. Raises PlacementFailure after 1000 rejected draws."""
    rng = np.random.default_rng(seed)
    road = RoadGeometry(LANE_WIDTH, lanes)
    scenarios = []
    for idx in range(n_scenarios):
        ego_lane = int(rng.integers(0, lanes))
        ego = EgoState(x=0.0, y=road.lane_center(ego_lane), vx=0.7 * v_desired, vy=0.0)
        span = 30.0 * n_obstacles + 40.0
        placed: list[Obstacle] | None = None
        for _try in range(1000):
            candidates = []
            ok = True
            for j in range(n_obstacles):
                lane = int(rng.integers(0, lanes))
                x = float(rng.uniform(EGO_LEAD_GAP, EGO_LEAD_GAP + span))
                speed = float(rng.uniform(*SPEED_RANGE)) * v_desired
                candidates.append(
                    Obstacle(x=x, y=road.lane_center(lane), vx=speed, vy=0.0,
                             length=CAR_LENGTH, width=CAR_WIDTH)
                )
            for j, a in enumerate(candidates):
                if road.lane_of(a.y) == ego_lane and a.x < EGO_LEAD_GAP:
                    ok = False
                    break
                for b in candidates[j + 1 :]:
                    if not _pair_gap_ok(a, b, duration, road):
                        ok = False
                        break
                if not ok:
                    break
            if ok:
                placed = candidates
                break
        if placed is None:
            raise PlacementFailure(
                f"could not place {n_obstacles} obstacles on {lanes} lanes (scenario {idx})"
            )
        scenarios.append(
            Scenario(
                road=road,
                ego=ego,
                ego_length=CAR_LENGTH,
                ego_width=CAR_WIDTH,
                v_desired=v_desired,
                obstacles=tuple(placed),
                duration=duration,
                seed=seed,
                name=f"gen-{lanes}lane-{n_obstacles}obs-{seed}-{idx}",
            )
        )
    return scenarios


def slow_leader_scenario(v_desired: float = V_DESIRED) -> Scenario:
    """Slow vehicle ahead in the ego's lane, adjacent lane free: the full
    planner overtakes, a lane-locked planner cannot."""
    road = RoadGeometry(LANE_WIDTH, 2)
    return Scenario(
        road=road,
        ego=EgoState(x=0.0, y=road.lane_center(0), vx=0.7 * v_desired, vy=0.0),
        ego_length=CAR_LENGTH,
        ego_width=CAR_WIDTH,
        v_desired=v_desired,
        obstacles=(
            Obstacle(x=45.0, y=road.lane_center(0), vx=0.5 * v_desired, vy=0.0,
                     length=CAR_LENGTH, width=CAR_WIDTH),
        ),
        duration=30.0,
        name="slow-leader",
    )


@dataclass
class MetricsReport:
    horizon: int
    dt: float
    n_scenarios: int
    n_completed: int
    n_collisions: int
    n_pinched: int
    n_solver_failure: int
    success_rate: float
    solve_ms_mean: float
    solve_ms_p95: float
    solve_ms_max: float
    time_to_speed_mean: float | None  # [s] first time within 5% of v_desired
    mean_abs_speed_dev: float  # [m/s]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def run_suite(scenarios: list[Scenario], cfg: MpcConfig) -> list[ClosedLoopTrace]:
    return [run(sc, cfg) for sc in scenarios]


def trace_travel_metrics(trace: ClosedLoopTrace, v_desired: float) -> tuple[float | None, float]:
    """(time to reach within 5% of v_desired or None, mean |vx - v_desired|)."""
    t_reach = None
    devs = []
    for r in trace.records:
        dev = abs(r.state.vx - v_desired)
        devs.append(dev)
        if t_reach is None and dev <= 0.05 * v_desired:
            t_reach = r.t
    return t_reach, float(np.mean(devs)) if devs else 0.0


def evaluate(
    scenarios: list[Scenario], cfg: MpcConfig, traces: list[ClosedLoopTrace] | None = None
) -> MetricsReport:
    """Run every scenario to completion and aggregate the three metric groups.

    Success counts completed runs; pinched-braking terminations are excluded
    from the denominator (no collision occurred) and reported separately.
    """
    if traces is None:
        traces = run_suite(scenarios, cfg)
    n = len(traces)
    n_completed = sum(t.status == "completed" for t in traces)
    n_collisions = sum(t.status == "collision" for t in traces)
    n_pinched = sum(t.status == "pinched" for t in traces)
    n_solver = sum(t.status == "solver-failure" for t in traces)
    denom = max(1, n - n_pinched)
    solve_ms = np.array(
        [r.solve_ms for t in traces for r in t.records if r.solve_ms > 0.0] or [0.0]
    )
    reach_times = []
    devs = []
    for sc, t in zip(scenarios, traces):
        t_reach, dev = trace_travel_metrics(t, sc.v_desired)
        devs.append(dev)
        if t_reach is not None:
            reach_times.append(t_reach)
    return MetricsReport(
        horizon=cfg.horizon,
        dt=cfg.dt,
        n_scenarios=n,
        n_completed=n_completed,
        n_collisions=n_collisions,
        n_pinched=n_pinched,
        n_solver_failure=n_solver,
        success_rate=n_completed / denom,
        solve_ms_mean=float(solve_ms.mean()),
        solve_ms_p95=float(np.percentile(solve_ms, 95)),
        solve_ms_max=float(solve_ms.max()),
        time_to_speed_mean=float(np.mean(reach_times)) if reach_times else None,
        mean_abs_speed_dev=float(np.mean(devs)) if devs else 0.0,
    )


def lane_locked_baseline(scenario: Scenario, cfg: MpcConfig) -> ClosedLoopTrace:
    """Same stack with the corridor restricted to the ego's initial lane."""
    return run(scenario, replace(cfg, lane_locked=True))


def write_trace_csv(trace: ClosedLoopTrace, path) -> None:
    """Per-cycle closed-loop trace; columns documented in the README."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "x", "y", "vx", "vy", "ux", "uy", "solve_ms", "status"])
        for r in trace.records:
            writer.writerow(
                [
                    f"{r.t:.3f}",
                    f"{r.state.x:.6f}", f"{r.state.y:.6f}",
                    f"{r.state.vx:.6f}", f"{r.state.vy:.6f}",
                    f"{r.control.ux:.6f}", f"{r.control.uy:.6f}",
                    f"{r.solve_ms:.3f}",
                    r.status,
                ]
            )
