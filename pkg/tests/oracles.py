"""Independent oracles used by the test suite.

These deliberately avoid the solver code paths: the Riccati recursion works
on raw (A, B, Q, R) matrices, and the lattice DP enumerates a fixed control
grid exactly (grid controls keep all reachable states on a lattice, so
states reached along different histories merge without any interpolation).
"""

from __future__ import annotations

import numpy as np


def riccati_lq_controls(
    A: np.ndarray,
    B: np.ndarray,
    Q: np.ndarray,
    R: np.ndarray,
    ref: np.ndarray,
    x0: np.ndarray,
    horizon: int,
) -> np.ndarray:
    """Optimal controls of the finite-horizon LQ tracking problem
    sum_k 1/2 u'Ru + 1/2 (z - ref)'Q(z - ref), z' = Az + Bu, no terminal cost.

    Value function V_k(z) = 1/2 z'P z + p'z + const, recursed backward.
    """
    n, m = B.shape
    P = np.zeros((n, n))
    p = np.zeros(n)
    F = np.empty((horizon, m, n))
    g = np.empty((horizon, m))
    for k in range(horizon - 1, -1, -1):
        H = R + B.T @ P @ B
        M = B.T @ P @ A
        Hinv = np.linalg.inv(H)
        F[k] = -Hinv @ M
        g[k] = -Hinv @ (B.T @ p)
        P_new = Q + A.T @ P @ A - M.T @ Hinv @ M
        p = -Q @ ref + A.T @ p - M.T @ (Hinv @ (B.T @ p))
        P = 0.5 * (P_new + P_new.T)
    us = np.empty((horizon, m))
    z = x0.astype(float).copy()
    for k in range(horizon):
        us[k] = F[k] @ z + g[k]
        z = A @ z + B @ us[k]
    return us


def lattice_dp_lateral(
    y0: float,
    vy0: float,
    band: tuple[float, float],
    u_grid: np.ndarray,
    horizon: int,
    T: float,
    w_u: float,
    w_v: float,
    v_des: float,
) -> float:
    """Exact DP over the (y, vy) lattice induced by a fixed lateral control
    grid, with the state-dependent landing bounds of a constant band.

    Returns the optimal cost, or inf when no grid control sequence stays
    inside the band.
    """
    lo_band, hi_band = band
    du = u_grid[1] - u_grid[0]
    y_res = 0.5 * du * T * T * 0.5  # y moves in halves of (du*T^2/2) per stage
    v_res = du * T
    t2 = T * T

    def key(y: float, vy: float) -> tuple[int, int]:
        return round((y - y0) / y_res), round((vy - vy0) / v_res)

    states: dict[tuple[int, int], tuple[float, float, float]] = {key(y0, vy0): (0.0, y0, vy0)}
    for _ in range(horizon):
        nxt: dict[tuple[int, int], tuple[float, float, float]] = {}
        for cost, y, vy in states.values():
            stage = 0.5 * w_v * (vy - v_des) ** 2
            hi_u = 2.0 * ((hi_band - y) - vy * T) / t2
            lo_u = 2.0 * ((lo_band - y) - vy * T) / t2
            for u in u_grid:
                if u < lo_u - 1e-12 or u > hi_u + 1e-12:
                    continue
                c = cost + stage + 0.5 * w_u * u * u
                y_n = y + vy * T + 0.5 * u * t2
                vy_n = vy + u * T
                k = key(y_n, vy_n)
                cur = nxt.get(k)
                if cur is None or c < cur[0]:
                    nxt[k] = (c, y_n, vy_n)
        states = nxt
        if not states:
            return float("inf")
    return min(c for c, _, _ in states.values())


def lattice_dp_longitudinal(
    vx0: float,
    u_grid: np.ndarray,
    horizon: int,
    T: float,
    w_u: float,
    w_v: float,
    v_des: float,
    ux_min: float,
    ux_max: float,
) -> float:
    """Exact DP over the vx lattice induced by a fixed longitudinal grid,
    honoring the state-dependent lower bound max(-vx/T, ux_min)."""
    du = u_grid[1] - u_grid[0]
    v_res = du * T

    def key(vx: float) -> int:
        return round((vx - vx0) / v_res)

    states: dict[int, tuple[float, float]] = {key(vx0): (0.0, vx0)}
    for _ in range(horizon):
        nxt: dict[int, tuple[float, float]] = {}
        for cost, vx in states.values():
            stage = 0.5 * w_v * (vx - v_des) ** 2
            lo_u = max(-vx / T, ux_min)
            for u in u_grid:
                if u < lo_u - 1e-12 or u > ux_max + 1e-12:
                    continue
                c = cost + stage + 0.5 * w_u * u * u
                vx_n = vx + u * T
                k = key(vx_n)
                cur = nxt.get(k)
                if cur is None or c < cur[0]:
                    nxt[k] = (c, vx_n)
        states = nxt
        if not states:
            return float("inf")
    return min(c for c, _ in states.values())


def central_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of a scalar function."""
    grad = np.empty_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return grad
