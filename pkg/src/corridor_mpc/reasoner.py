"""Orientation (lambda) assignment for obstacle corridors.

Edge-lane obstacles are forced by geometry: an obstacle at or above the road
midline gets +1 (ego passes below), otherwise -1. On roads with more than two
lanes, middle-lane obstacles admit either value; those are resolved by an
efficiency check that enumerates candidate assignments, builds each candidate
corridor, and keeps the one with the largest free-space area over the ego's
reachable longitudinal span.

An external chat-completion model can stand in for the rule-based path; its
output is validated and any failure falls back to the deterministic rules, so
the planner never sees an error from this module's LLM path.
"""

from __future__ import annotations

import itertools
import json
import os
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Sequence

import numpy as np

from .corridor import (
    CorridorConfig,
    Obstacle,
    RoadGeometry,
    aggregate_corridor,
    obstacle_sigmoid_params,
)
from .dynamics import EgoState
from .errors import AllPinched, MarginOverflow

_SCORE_RTOL = 1e-9  # relative tie tolerance on free-space areas


@dataclass(frozen=True)
class LambdaAssignment:
    """Ordered orientation values, one per obstacle."""

    values: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(v not in (1, -1) for v in self.values):
            raise ValueError(f"entries must be +1 or -1, got {self.values}")

    def __len__(self) -> int:
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, i: int) -> int:
        return self.values[i]


@dataclass(frozen=True)
class DrivingConditionSummary:
    """Everything the orientation decision needs to know about the scene."""

    ego: EgoState
    obstacles: tuple[Obstacle, ...]
    road: RoadGeometry
    speed_limit: float
    v_desired: float

    def __post_init__(self) -> None:
        for o in self.obstacles:
            if not (0.0 < o.y < self.road.width):
                raise ValueError(f"obstacle at y={o.y} is off the road")


@dataclass(frozen=True)
class ReasonerConfig:
    """Parameters of the free-space scoring and enumeration."""

    horizon_steps: int = 40
    dt: float = 0.25
    ux_max: float = 3.0
    enum_cap: int = 8  # max ambiguous obstacles enumerated exhaustively
    grid_points: int = 512
    margins: CorridorConfig = field(default_factory=CorridorConfig)


def static_rule(y_o: float, road: RoadGeometry) -> int:
    """+1 when the obstacle sits at or above the road midline, else -1."""
    return 1 if y_o >= 0.5 * road.width else -1


def _reach_span(summary: DrivingConditionSummary, cfg: ReasonerConfig) -> tuple[float, float]:
    horizon_t = cfg.horizon_steps * cfg.dt
    reach = summary.ego.vx * horizon_t + 0.5 * cfg.ux_max * horizon_t * horizon_t
    return summary.ego.x, summary.ego.x + reach


def _free_space_score(
    summary: DrivingConditionSummary, values: Sequence[int], cfg: ReasonerConfig
) -> tuple[float, bool] | None:
    """(area, contains_ego) of the candidate corridor, or None when invalid."""
    ego, road = summary.ego, summary.road
    try:
        pairs = []
        for o, lam in zip(summary.obstacles, values):
            o_lam = replace(o, lam=lam)
            pairs.append((o_lam, obstacle_sigmoid_params(o_lam, ego, road, cfg.margins)))
        step = aggregate_corridor(pairs, road, cfg.margins)
    except MarginOverflow:
        return None
    lo_span, hi_span = _reach_span(summary, cfg)
    xs = np.linspace(lo_span, hi_span, cfg.grid_points)
    gap = step.upper(xs) - step.lower(xs)
    if (gap <= 0.0).any():
        return None
    area = float(np.trapezoid(gap, xs))
    lo0, up0 = step.bounds(ego.x)
    return area, lo0 <= ego.y <= up0


def _ambiguous_indices(summary: DrivingConditionSummary) -> list[int]:
    road = summary.road
    if road.n_lanes <= 2:
        return []
    return [
        i
        for i, o in enumerate(summary.obstacles)
        if 0 < road.lane_of(o.y) < road.n_lanes - 1
    ]


def efficiency_check(
    summary: DrivingConditionSummary,
    ambiguous: Sequence[int],
    cfg: ReasonerConfig | None = None,
) -> LambdaAssignment:
    """Resolve ambiguous obstacles by maximizing corridor free-space area.

    Enumerates every orientation combination over the ambiguous obstacles
    (edge-lane obstacles stay at their static-rule values), scores each valid
    candidate by the integral of (upper - lower) over the ego's reachable
    span, and returns the argmax. Ties prefer candidates whose corridor
    contains the ego's current lateral position, then candidates agreeing
    with the static rule. Raises AllPinched when no candidate is feasible.
    """
    cfg = cfg or ReasonerConfig()
    base = [static_rule(o.y, summary.road) for o in summary.obstacles]
    ambiguous = list(ambiguous)
    if not ambiguous:
        return LambdaAssignment(tuple(base))
    if len(ambiguous) > cfg.enum_cap:
        return _greedy_resolve(summary, ambiguous, base, cfg)

    candidates = []  # (area, contains_ego, static_agreement, values)
    for combo in itertools.product((1, -1), repeat=len(ambiguous)):
        values = list(base)
        for idx, lam in zip(ambiguous, combo):
            values[idx] = lam
        scored = _free_space_score(summary, values, cfg)
        if scored is None:
            continue
        area, contains = scored
        agreement = sum(values[i] == base[i] for i in ambiguous)
        candidates.append((area, contains, agreement, tuple(values)))
    if not candidates:
        raise AllPinched("every lambda assignment yields a pinched corridor")
    best_area = max(c[0] for c in candidates)
    tol = _SCORE_RTOL * max(1.0, abs(best_area))
    ties = [c for c in candidates if c[0] >= best_area - tol]
    _, _, _, values = max(ties, key=lambda c: (c[1], c[2]))
    return LambdaAssignment(values)


def _greedy_resolve(
    summary: DrivingConditionSummary,
    ambiguous: list[int],
    base: list[int],
    cfg: ReasonerConfig,
) -> LambdaAssignment:
    """Per-obstacle resolution, nearest first, for oversized ambiguity sets."""
    values = list(base)
    any_valid = False
    for idx in sorted(ambiguous, key=lambda i: summary.obstacles[i].x):
        scores = {}
        for lam in (1, -1):
            values[idx] = lam
            scored = _free_space_score(summary, values, cfg)
            if scored is not None:
                scores[lam] = scored[0]
        if not scores:
            values[idx] = base[idx]
            continue
        any_valid = True
        if len(scores) == 2 and abs(scores[1] - scores[-1]) <= _SCORE_RTOL * max(
            1.0, abs(scores[1])
        ):
            values[idx] = base[idx]
        else:
            values[idx] = max(scores, key=scores.get)
    if not any_valid and ambiguous:
        final = _free_space_score(summary, values, cfg)
        if final is None:
            raise AllPinched("every lambda assignment yields a pinched corridor")
    return LambdaAssignment(tuple(values))


def decide_lambdas(
    summary: DrivingConditionSummary, cfg: ReasonerConfig | None = None
) -> LambdaAssignment:
    """Full rule-based pipeline: static rules, then the efficiency check."""
    cfg = cfg or ReasonerConfig()
    if not summary.obstacles:
        return LambdaAssignment(())
    ambiguous = _ambiguous_indices(summary)
    if not ambiguous:
        return LambdaAssignment(
            tuple(static_rule(o.y, summary.road) for o in summary.obstacles)
        )
    return efficiency_check(summary, ambiguous, cfg)


# --- optional external-model path -------------------------------------------


@dataclass(frozen=True)
class LlmConfig:
    """Chat-completion endpoint settings; the API key is read from the
    environment variable named in api_key_env, never stored here."""

    endpoint: str
    model: str
    api_key_env: str = "CORRIDOR_MPC_API_KEY"
    timeout: float = 2.0
    temperature: float = 0.0


@dataclass(frozen=True)
class LlmDecision:
    assignment: LambdaAssignment
    source: str  # "llm" or "fallback"
    failure: str | None = None


def render_condition(summary: DrivingConditionSummary) -> str:
    road = summary.road
    lines = [
        f"road: {road.n_lanes} lanes, lane width {road.lane_width:.2f} m, "
        f"total width {road.width:.2f} m",
        f"speed limit: {summary.speed_limit:.2f} m/s",
        f"ego: x={summary.ego.x:.2f} m, y={summary.ego.y:.2f} m, "
        f"vx={summary.ego.vx:.2f} m/s, vy={summary.ego.vy:.2f} m/s, "
        f"desired speed {summary.v_desired:.2f} m/s",
    ]
    for i, o in enumerate(summary.obstacles):
        lines.append(
            f"obstacle {i}: x={o.x:.2f} m, y={o.y:.2f} m (lane {road.lane_of(o.y)}), "
            f"vx={o.vx:.2f} m/s, vy={o.vy:.2f} m/s, "
            f"size {o.length:.1f} x {o.width:.1f} m"
        )
    return "\n".join(lines)


def render_prompt(summary: DrivingConditionSummary) -> str:
    template = (
        resources.files("corridor_mpc").joinpath("prompts/lambda_prompt_v1.txt").read_text()
    )
    return template.format(
        condition=render_condition(summary), n=len(summary.obstacles)
    )


def _parse_assignment(text: str, n: int) -> LambdaAssignment:
    match = re.search(r"\[([^\]]*)\]", text)
    if match is None:
        raise ValueError("no bracketed list in response")
    entries = [tok.strip() for tok in match.group(1).split(",") if tok.strip()]
    if len(entries) != n:
        raise ValueError("length mismatch")
    values = []
    for tok in entries:
        v = int(tok)
        if v not in (1, -1):
            raise ValueError(f"invalid entry {v}")
        values.append(v)
    return LambdaAssignment(tuple(values))


def _http_transport(adapter: LlmConfig, body: dict) -> str:
    import requests

    headers = {"Content-Type": "application/json"}
    key = os.environ.get(adapter.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    resp = requests.post(adapter.endpoint, json=body, headers=headers, timeout=adapter.timeout)
    resp.raise_for_status()
    return resp.json()["choices"][0]["message"]["content"]


def llm_decide(
    summary: DrivingConditionSummary,
    adapter: LlmConfig,
    cfg: ReasonerConfig | None = None,
    transport: Callable[[LlmConfig, dict], str] | None = None,
) -> LlmDecision:
    """One chat-completion call deciding the assignment, with total fallback.

    Any transport error, timeout, unparsable response, wrong vector length or
    out-of-alphabet entry falls back to decide_lambdas; the returned decision
    records the failure cause. Never raises toward the planner.
    """
    cfg = cfg or ReasonerConfig()
    transport = transport or _http_transport
    body = {
        "model": adapter.model,
        "temperature": adapter.temperature,
        "messages": [{"role": "user", "content": render_prompt(summary)}],
    }
    try:
        content = transport(adapter, body)
        assignment = _parse_assignment(content, len(summary.obstacles))
        return LlmDecision(assignment=assignment, source="llm")
    except Exception as exc:  # noqa: BLE001 - fallback must be total
        cause = _failure_cause(exc)
        return LlmDecision(
            assignment=decide_lambdas(summary, cfg), source="fallback", failure=cause
        )


def _failure_cause(exc: Exception) -> str:
    name = type(exc).__name__.lower()
    if "timeout" in name:
        return "timeout"
    if isinstance(exc, ValueError):
        return str(exc) or "parse error"
    if isinstance(exc, (KeyError, TypeError, json.JSONDecodeError)):
        return "malformed response"
    return f"transport error: {type(exc).__name__}"
