"""Constrained differential dynamic programming for the corridor OCP.

Quadratic stage cost (control effort + speed tracking), exactly linear
double-integrator dynamics (the value recursion's dynamics-curvature terms
vanish identically), and state-dependent control bounds. Bounds enter the
backward pass linearized about the nominal trajectory and are handled by a
small active-set QP at every stage; the forward pass rolls out the affine
control law with a backtracking line search and re-clips each control
against the exact nonlinear bounds, so every accepted iterate is feasible.

The lateral corridor bound at stage k is evaluated at the *landing*
longitudinal position (stage k+1), which makes the resulting next-step
lateral position land inside the corridor exactly rather than up to a
one-step lag.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .corridor import CorridorSpec
from .dynamics import EgoState, VehicleLimits, state_matrices
from .errors import DegenerateQuu, LineSearchFailed, NotConverged, PinchedCorridor

CONVERGENCE_EPS = 1e-4  # threshold on the control-update norm
LINE_SEARCH_C1 = 1e-4  # sufficient-decrease fraction of the predicted reduction
MIN_STEP = 2.0**-10
MAX_QP_PIVOTS = 10
REG_INIT = 1e-6
REG_MAX = 1e8


@dataclass(frozen=True)
class OcpDefinition:
    """One finite-horizon corridor-constrained problem instance."""

    horizon: int  # K steps
    dt: float  # T [s]
    initial: EgoState
    weights: tuple[float, float, float, float]  # w1..w4 (ux, uy, vx, vy terms)
    v_desired_x: float
    v_desired_y: float
    corridor: CorridorSpec
    limits: VehicleLimits
    max_iters: int = 50
    convergence_eps: float = CONVERGENCE_EPS

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        w1, w2, w3, w4 = self.weights
        if min(self.weights) < 0.0:
            raise ValueError(f"weights must be nonnegative, got {self.weights}")
        if w1 <= 0.0 or w2 <= 0.0:
            raise ValueError("control weights w1, w2 must be positive")
        if self.dt != self.limits.T:
            raise ValueError(f"dt {self.dt} disagrees with limits.T {self.limits.T}")


@dataclass(frozen=True)
class StageCost:
    value: float
    lx: np.ndarray  # (4,)
    lu: np.ndarray  # (2,)
    lxx: np.ndarray  # (4, 4)
    luu: np.ndarray  # (2, 2)
    lux: np.ndarray  # (2, 4)


@dataclass(frozen=True)
class QCoefficients:
    qx: np.ndarray
    qu: np.ndarray
    qxx: np.ndarray
    qux: np.ndarray
    quu: np.ndarray


@dataclass(frozen=True)
class ValueExpansion:
    vx: np.ndarray
    vxx: np.ndarray


@dataclass(frozen=True)
class Gains:
    k_ff: np.ndarray  # (2,)
    k_fb: np.ndarray  # (2, 4)
    active_set: tuple[int, ...]
    multipliers: np.ndarray  # one per active constraint


@dataclass
class SolveResult:
    states: np.ndarray  # (K+1, 4)
    controls: np.ndarray  # (K, 2)
    cost: float
    iterations: int
    converged: bool
    cost_trace: list[float] = field(default_factory=list)
    # per accepted iteration: (iteration, cost, step size, regularization,
    # total active constraints across stages)
    iteration_trace: list[tuple[int, float, float, float, int]] = field(default_factory=list)

    def state_at(self, k: int) -> EgoState:
        return EgoState.from_array(self.states[k])


def stage_cost(s, u, defn: OcpDefinition) -> StageCost:
    """Stage cost and its exact derivatives.

    L = w1*ux^2/2 + w2*uy^2/2 + w3*(vx - vdx)^2/2 + w4*(vy - vdy)^2/2
    """
    w1, w2, w3, w4 = defn.weights
    if isinstance(s, EgoState):
        s = s.as_array()
    ux, uy = float(u[0]), float(u[1])
    dvx = float(s[2]) - defn.v_desired_x
    dvy = float(s[3]) - defn.v_desired_y
    value = 0.5 * (w1 * ux * ux + w2 * uy * uy + w3 * dvx * dvx + w4 * dvy * dvy)
    lx = np.array([0.0, 0.0, w3 * dvx, w4 * dvy])
    lu = np.array([w1 * ux, w2 * uy])
    lxx = np.diag([0.0, 0.0, w3, w4])
    luu = np.diag([w1, w2])
    lux = np.zeros((2, 4))
    return StageCost(value, lx, lu, lxx, luu, lux)


def _stage_cost_value(vx: float, vy: float, ux: float, uy: float, defn: OcpDefinition) -> float:
    w1, w2, w3, w4 = defn.weights
    dvx = vx - defn.v_desired_x
    dvy = vy - defn.v_desired_y
    return 0.5 * (w1 * ux * ux + w2 * uy * uy + w3 * dvx * dvx + w4 * dvy * dvy)


def trajectory_cost(xs: np.ndarray, us: np.ndarray, defn: OcpDefinition) -> float:
    total = 0.0
    for k in range(defn.horizon):
        total += _stage_cost_value(xs[k, 2], xs[k, 3], us[k, 0], us[k, 1], defn)
    return total


# --- stage constraint linearization ------------------------------------------


def _stage_constraints(
    x: np.ndarray, u: np.ndarray, x_next_x: float, k: int, defn: OcpDefinition
) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Rows (cu, cx, c0) of c(x, u) <= 0 linearized at the nominal point.

    x_next_x is the nominal landing longitudinal position, where the lateral
    corridor bound is evaluated (corridor step k+1).
    """
    T = defn.dt
    lim = defn.limits
    rows: list[tuple[np.ndarray, np.ndarray, float]] = []

    # longitudinal upper: ux - ux_max <= 0
    rows.append((np.array([1.0, 0.0]), np.zeros(4), float(u[0]) - lim.ux_max))
    # longitudinal lower: max(-vx/T, ux_min) - ux <= 0
    if -x[2] / T >= lim.ux_min:
        rows.append(
            (np.array([-1.0, 0.0]), np.array([0.0, 0.0, -1.0 / T, 0.0]), -x[2] / T - float(u[0]))
        )
    else:
        rows.append((np.array([-1.0, 0.0]), np.zeros(4), lim.ux_min - float(u[0])))

    step = defn.corridor.step(k + 1)
    y_lo, lo_slope, y_up, up_slope = step.bounds_and_slopes(x_next_x)
    t2 = T * T
    # lateral upper: uy - 2*((y_up(x_land) - y) - vy*T)/T^2 <= 0
    hi = 2.0 * ((y_up - x[1]) - x[3] * T) / t2
    rows.append(
        (
            np.array([-up_slope, 1.0]),
            np.array([-2.0 * up_slope / t2, 2.0 / t2, -2.0 * up_slope / T, 2.0 / T]),
            float(u[1]) - hi,
        )
    )
    # lateral lower: 2*((y_lo(x_land) - y) - vy*T)/T^2 - uy <= 0
    lo = 2.0 * ((y_lo - x[1]) - x[3] * T) / t2
    rows.append(
        (
            np.array([lo_slope, -1.0]),
            np.array([2.0 * lo_slope / t2, -2.0 / t2, 2.0 * lo_slope / T, -2.0 / T]),
            lo - float(u[1]),
        )
    )
    if lim.uy_abs_max is not None:
        rows.append((np.array([0.0, 1.0]), np.zeros(4), float(u[1]) - lim.uy_abs_max))
        rows.append((np.array([0.0, -1.0]), np.zeros(4), -lim.uy_abs_max - float(u[1])))
    return rows


def _solve_stage_qp(
    quu: np.ndarray,
    qu: np.ndarray,
    qux: np.ndarray,
    rows: list[tuple[np.ndarray, np.ndarray, float]],
    start_active: tuple[int, ...],
) -> tuple[np.ndarray, np.ndarray, tuple[int, ...], np.ndarray]:
    """Active-set solve of min 1/2 du'Quu du + Qu'du s.t. cu_i du <= -c0_i.

    Returns (k_ff, K_fb, active set, multipliers). The feedback gain comes
    from the same KKT system with the constraint right-hand sides' state
    sensitivity, so active constraints stay satisfied to first order in dx.
    """
    n_rows = len(rows)
    active = [i for i in start_active if i < n_rows]

    def kkt_solve(act: list[int]):
        m = len(act)
        kkt = np.zeros((2 + m, 2 + m))
        kkt[:2, :2] = quu
        rhs = np.zeros((2 + m, 5))
        rhs[:2, 0] = -qu
        rhs[:2, 1:] = -qux
        for j, i in enumerate(act):
            cu, cx, c0 = rows[i]
            kkt[:2, 2 + j] = cu
            kkt[2 + j, :2] = cu
            rhs[2 + j, 0] = -c0
            rhs[2 + j, 1:] = -cx
        return np.linalg.solve(kkt, rhs)

    sol = None
    for _ in range(MAX_QP_PIVOTS):
        try:
            sol = kkt_solve(active)
        except np.linalg.LinAlgError:
            # dependent active rows (e.g. a pinched pair): drop the newest
            active.pop()
            continue
        du = sol[:2, 0]
        lam = sol[2:, 0]
        if len(active) and lam.min() < -1e-12:
            active.pop(int(np.argmin(lam)))
            continue
        worst, worst_viol = -1, 1e-10
        for i in range(n_rows):
            if i in active:
                continue
            cu, _, c0 = rows[i]
            viol = c0 + float(cu @ du)
            if viol > worst_viol:
                worst, worst_viol = i, viol
        if worst < 0:
            break
        if len(active) >= 2:
            # two controls: a third active row is necessarily dependent
            break
        active.append(worst)
    if sol is None:
        sol = kkt_solve(active)
    return sol[:2, 0], sol[:2, 1:], tuple(active), sol[2:, 0].copy()


def backward_pass(
    xs: np.ndarray,
    us: np.ndarray,
    defn: OcpDefinition,
    reg: float = 0.0,
    prev_active: list[tuple[int, ...]] | None = None,
) -> tuple[list[Gains], float, float]:
    """One backward sweep; returns per-stage gains and the predicted cost
    change (linear, quadratic) of a unit step.

    Raises DegenerateQuu when Quu + reg*I fails its Cholesky factorization at
    the given regularization; the caller escalates reg and retries.
    """
    K = defn.horizon
    A, B = state_matrices(defn.dt)
    At, Bt = A.T, B.T
    vx_vec = np.zeros(4)
    vxx = np.zeros((4, 4))
    gains: list[Gains] = [None] * K  # type: ignore[list-item]
    exp_lin = 0.0
    exp_quad = 0.0
    eye2 = np.eye(2)
    for k in range(K - 1, -1, -1):
        lc = stage_cost(xs[k], us[k], defn)
        qx = lc.lx + At @ vx_vec
        qu = lc.lu + Bt @ vx_vec
        vxx_a = vxx @ A
        qxx = lc.lxx + At @ vxx_a
        qux = Bt @ vxx_a
        quu = lc.luu + Bt @ vxx @ B
        quu_reg = quu + reg * eye2
        try:
            np.linalg.cholesky(quu_reg)
        except np.linalg.LinAlgError:
            raise DegenerateQuu(f"Quu not positive definite at stage {k} with reg={reg}")
        rows = _stage_constraints(xs[k], us[k], float(xs[k + 1, 0]), k, defn)
        start = prev_active[k] if prev_active is not None else ()
        k_ff, k_fb, active, mult = _solve_stage_qp(quu_reg, qu, qux, rows, start)
        gains[k] = Gains(k_ff=k_ff, k_fb=k_fb, active_set=active, multipliers=mult)

        exp_lin += float(k_ff @ qu)
        exp_quad += 0.5 * float(k_ff @ quu_reg @ k_ff)
        quu_k = quu_reg @ k_ff
        vx_vec = qx + k_fb.T @ (qu + quu_k) + qux.T @ k_ff
        vxx = qxx + k_fb.T @ quu_reg @ k_fb + k_fb.T @ qux + qux.T @ k_fb
        vxx = 0.5 * (vxx + vxx.T)
    return gains, exp_lin, exp_quad


def _rollout(
    x0: np.ndarray,
    policy,  # callable(k, x) -> (ux, uy) before clipping
    defn: OcpDefinition,
    raise_on_pinch: bool,
) -> tuple[np.ndarray, np.ndarray, float] | None:
    """Roll the dynamics forward, clipping controls to the exact bounds.

    The longitudinal control is fixed first, which pins the landing x, so the
    lateral corridor bound can be evaluated exactly at the landing position.
    Returns None on a pinched band when raise_on_pinch is False.
    """
    K, T = defn.horizon, defn.dt
    lim = defn.limits
    t2 = T * T
    xs = np.empty((K + 1, 4))
    us = np.empty((K, 2))
    xs[0] = x0
    cost = 0.0
    x, y, vx, vy = (float(v) for v in x0)
    for k in range(K):
        ux, uy = policy(k, xs[k])
        lo_x = max(-vx / T, lim.ux_min)
        ux = min(max(ux, lo_x), lim.ux_max)
        x_next = x + vx * T + 0.5 * ux * t2
        step_corr = defn.corridor.step(k + 1)
        y_lo = step_corr.lower(x_next)
        y_up = step_corr.upper(x_next)
        if y_lo >= y_up:
            if raise_on_pinch:
                raise PinchedCorridor(
                    f"pinched band [{y_lo:.3f}, {y_up:.3f}] at x={x_next:.2f} (stage {k})",
                    interval=(x_next, x_next),
                )
            return None
        if lim.uy_abs_max is not None:
            uy = min(max(uy, -lim.uy_abs_max), lim.uy_abs_max)
        lo_y = 2.0 * ((y_lo - y) - vy * T) / t2
        hi_y = 2.0 * ((y_up - y) - vy * T) / t2
        uy = min(max(uy, lo_y), hi_y)
        us[k, 0], us[k, 1] = ux, uy
        cost += _stage_cost_value(vx, vy, ux, uy, defn)
        x = x_next
        y = y + vy * T + 0.5 * uy * t2
        vx = vx + ux * T
        vy = vy + uy * T
        xs[k + 1] = (x, y, vx, vy)
    return xs, us, cost


def forward_pass(
    xs: np.ndarray,
    us: np.ndarray,
    gains: list[Gains],
    defn: OcpDefinition,
    expected_reduction: float,
    nominal_cost: float,
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Backtracking line search over the affine control update.

    Accepts the first step size whose realized cost reduction is at least
    LINE_SEARCH_C1 * eps * expected_reduction; raises LineSearchFailed below
    MIN_STEP.
    """
    threshold_base = LINE_SEARCH_C1 * max(expected_reduction, 0.0)
    eps = 1.0
    while eps >= MIN_STEP:
        def policy(k, xk, _eps=eps):
            g = gains[k]
            du = _eps * (g.k_ff + g.k_fb @ (xk - xs[k]))
            return us[k, 0] + du[0], us[k, 1] + du[1]

        rolled = _rollout(xs[0], policy, defn, raise_on_pinch=False)
        if rolled is not None:
            new_xs, new_us, new_cost = rolled
            if math.isfinite(new_cost) and nominal_cost - new_cost >= threshold_base * eps:
                return new_xs, new_us, new_cost, eps
        eps *= 0.5
    raise LineSearchFailed(f"no acceptable step above {MIN_STEP}")


def solve(defn: OcpDefinition, warm_start: np.ndarray | None = None) -> SolveResult:
    """Iterate backward/forward passes until the control-update norm drops
    below the convergence threshold.

    warm_start is an optional (K, 2) control trajectory; it is re-rolled with
    exact-bound clipping, so it need only be approximately feasible. Raises
    NotConverged (carrying the best result) at the iteration cap and
    propagates PinchedCorridor from corridor evaluation.
    """
    if warm_start is not None:
        ws = np.asarray(warm_start, dtype=float)
        if ws.shape != (defn.horizon, 2):
            raise ValueError(f"warm start shape {ws.shape} != ({defn.horizon}, 2)")
        rolled = _rollout(
            defn.initial.as_array(), lambda k, _x: (ws[k, 0], ws[k, 1]), defn, raise_on_pinch=True
        )
    else:
        rolled = _rollout(defn.initial.as_array(), lambda _k, _x: (0.0, 0.0), defn, raise_on_pinch=True)
    assert rolled is not None
    xs, us, cost = rolled

    cost_trace = [cost]
    iteration_trace: list[tuple[int, float, float, float, int]] = []
    active_sets: list[tuple[int, ...]] | None = None
    reg = 0.0
    iterations = 0
    converged = False
    while iterations < defn.max_iters:
        try:
            gains, exp_lin, exp_quad = backward_pass(xs, us, defn, reg, active_sets)
        except DegenerateQuu:
            reg = REG_INIT if reg == 0.0 else reg * 10.0
            if reg > REG_MAX:
                break
            continue
        if iterations > 0:
            pred_norm = math.sqrt(sum(float(g.k_ff @ g.k_ff) for g in gains))
            if pred_norm < defn.convergence_eps:
                converged = True
                break
        expected = -(exp_lin + exp_quad)
        try:
            new_xs, new_us, new_cost, eps = forward_pass(xs, us, gains, defn, expected, cost)
        except LineSearchFailed:
            reg = REG_INIT if reg == 0.0 else reg * 10.0
            if reg > REG_MAX:
                break
            continue
        update_norm = math.sqrt(float(((new_us - us) ** 2).sum()))
        xs, us, cost = new_xs, new_us, new_cost
        iterations += 1
        cost_trace.append(cost)
        iteration_trace.append(
            (iterations, cost, eps, reg, sum(len(g.active_set) for g in gains))
        )
        active_sets = [g.active_set for g in gains]
        reg = 0.0 if reg < 1e-12 else 0.5 * reg
        if update_norm < defn.convergence_eps:
            converged = True
            break

    result = SolveResult(
        states=xs,
        controls=us,
        cost=cost,
        iterations=max(iterations, 1) if converged else iterations,
        converged=converged,
        cost_trace=cost_trace,
        iteration_trace=iteration_trace,
    )
    if not converged:
        raise NotConverged(
            f"no convergence in {defn.max_iters} iterations (cost {cost:.6g})", result=result
        )
    return result


def write_iteration_csv(result: SolveResult, path) -> None:
    """Per-iteration solver diagnostics for debugging."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "cost", "step_size", "regularization", "active_constraints"])
        for row in result.iteration_trace:
            writer.writerow(row)
