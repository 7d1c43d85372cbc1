"""Grid helpers shared by the integrators: RK4 for linear ODEs and quadrature weights."""

from __future__ import annotations

import numpy as np


def rk4_linear(A_nodes, A_mid, y0, h, b_nodes=None, b_mid=None, backward=False):
    """Fixed-step RK4 for y' = A(t) y + b(t) on a uniform grid.

    Coefficients are sampled at the N+1 nodes and the N cell midpoints, which
    is exactly what classical RK4 consumes. ``y0`` may be a vector ``(n,)`` or
    a matrix ``(n, k)`` (k right-hand sides at once). With ``backward`` the
    initial value is placed at the last node and the grid is swept in reverse.
    """
    A_nodes = np.asarray(A_nodes, float)
    A_mid = np.asarray(A_mid, float)
    N = A_nodes.shape[0] - 1
    y0 = np.asarray(y0, float)
    has_b = b_nodes is not None
    if has_b:
        b_nodes = np.asarray(b_nodes, float)
        b_mid = np.asarray(b_mid, float)
    Y = np.empty((N + 1,) + y0.shape)

    def rhs(A, y, b):
        out = A @ y
        return out + b if has_b else out

    if backward:
        Y[N] = y0
        for i in range(N, 0, -1):
            y = Y[i]
            bn0 = b_nodes[i] if has_b else None
            bm = b_mid[i - 1] if has_b else None
            bn1 = b_nodes[i - 1] if has_b else None
            k1 = rhs(A_nodes[i], y, bn0)
            k2 = rhs(A_mid[i - 1], y - 0.5 * h * k1, bm)
            k3 = rhs(A_mid[i - 1], y - 0.5 * h * k2, bm)
            k4 = rhs(A_nodes[i - 1], y - h * k3, bn1)
            Y[i - 1] = y - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    else:
        Y[0] = y0
        for i in range(N):
            y = Y[i]
            bn0 = b_nodes[i] if has_b else None
            bm = b_mid[i] if has_b else None
            bn1 = b_nodes[i + 1] if has_b else None
            k1 = rhs(A_nodes[i], y, bn0)
            k2 = rhs(A_mid[i], y + 0.5 * h * k1, bm)
            k3 = rhs(A_mid[i], y + 0.5 * h * k2, bm)
            k4 = rhs(A_nodes[i + 1], y + h * k3, bn1)
            Y[i + 1] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return Y


def simpson_weights(N: int, h: float) -> np.ndarray:
    """Composite Simpson weights for N (even) intervals of width h."""
    if N < 2 or N % 2:
        raise ValueError("composite Simpson needs an even, positive number of intervals")
    w = np.ones(N + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (h / 3.0)


def simpson(values, h: float) -> float | np.ndarray:
    """Composite Simpson integral along the first axis."""
    values = np.asarray(values, float)
    w = simpson_weights(values.shape[0] - 1, h)
    return np.tensordot(w, values, axes=(0, 0))


def tail_integrals(values, h: float) -> np.ndarray:
    """I_i = integral from t_i to t_N of the sampled function.

    Uses Simpson on every even-length tail and Simpson plus one cubic
    (Simpson 3/8) panel on odd-length tails, so all entries are fourth order.
    """
    y = np.asarray(values, float)
    N = y.shape[0] - 1
    out = np.zeros_like(y)
    # even tails: accumulate Simpson panels backwards from the end
    for i in range(N - 2, -1, -2):
        out[i] = out[i + 2] + (h / 3.0) * (y[i] + 4.0 * y[i + 1] + y[i + 2])
    # odd tails: a 3/8 panel on [t_i, t_{i+3}] then the even tail from i+3
    for i in range(N - 1, -1, -2):
        if i + 3 <= N:
            out[i] = out[i + 3] + (3.0 * h / 8.0) * (y[i] + 3.0 * y[i + 1] + 3.0 * y[i + 2] + y[i + 3])
        elif N >= 3:  # last cell only: cubic through the final four nodes
            out[i] = (h / 24.0) * (y[N - 3] - 5.0 * y[N - 2] + 19.0 * y[N - 1] + 9.0 * y[N])
        else:
            out[i] = 0.5 * h * (y[i] + y[i + 1])
    return out


def running_trapezoid(values, h: float) -> tuple[np.ndarray, np.ndarray]:
    """Running integral from 0 at nodes and at cell midpoints (trapezoid rule).

    Midpoint values assume the integrand is linear on each cell, matching the
    piecewise-linear grid functions used throughout.
    """
    y = np.asarray(values, float)
    cell = 0.5 * h * (y[:-1] + y[1:])
    nodes = np.concatenate([np.zeros((1,) + y.shape[1:]), np.cumsum(cell, axis=0)])
    ym = 0.5 * (y[:-1] + y[1:])
    mids = nodes[:-1] + 0.25 * h * (y[:-1] + ym)
    return nodes, mids
