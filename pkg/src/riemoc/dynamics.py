"""State, adjoint and variational equations along a candidate trajectory.

All equations are integrated with fixed-step RK4 on one uniform grid. The
candidate control is piecewise linear between grid nodes, so RK4 midpoint
stages use the average of neighbouring node values; midpoint states come
from cubic Hermite interpolation of the stored states and velocities. The
linear equations (adjoint, first and second variations) therefore only need
their coefficients at nodes and midpoints, which are evaluated in one
vectorised call per derivative group.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .exprlang import Expr, compile_exprs, differentiate, parse
from .geometry import (
    Manifold,
    ParallelFrame,
    christoffel_at,
    christoffel_grad_at,
    curvature_vector,
    geodesic_shoot,
    hermite_midpoints,
)
from .numerics import rk4_linear, running_trapezoid

__all__ = [
    "ControlSystem",
    "Trajectory",
    "IntegrationError",
    "grid_function",
    "integrate_state",
    "integrate_adjoint",
    "integrate_first_variation",
    "integrate_first_variation_free_time",
    "second_variation_coefficients",
    "integrate_second_variation",
    "flow_perturbed",
]


class IntegrationError(ArithmeticError):
    def __init__(self, message: str, node: int | None = None):
        self.node = node
        super().__init__(message if node is None else f"{message} (first bad node {node})")


class ControlSystem:
    """Chart dynamics xi' = f(t, xi, u) given by expression trees.

    Variables are ``t``, ``x1..xn`` and ``u1..um``. Every partial derivative
    is generated from the same trees by symbolic differentiation and
    compiled on first use.
    """

    def __init__(self, f: Sequence[Expr], n: int, m: int):
        if len(f) != n:
            raise ValueError(f"expected {n} dynamics components, got {len(f)}")
        self.n, self.m = n, m
        self.f = tuple(f)
        self.xnames = [f"x{i + 1}" for i in range(n)]
        self.unames = [f"u{i + 1}" for i in range(m)]
        self.variables = ["t"] + self.xnames + self.unames
        allowed = set(self.variables)
        for k, e in enumerate(self.f):
            extra = e.free_vars() - allowed
            if extra:
                raise ValueError(f"f{k + 1} uses undeclared variables {sorted(extra)}")
        self.autonomous = all("t" not in e.free_vars() for e in self.f)
        self._compiled: dict[str, Callable] = {}
        self._f_scalar = compile_exprs(self.f, self.variables, backend="math")

    @classmethod
    def from_strings(cls, f: Sequence[str], n: int, m: int) -> "ControlSystem":
        names = ["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]
        return cls([parse(s, names) for s in f], n, m)

    # derivative groups -----------------------------------------------------

    def _group(self, name: str):
        """Expressions and output shape for a derivative group."""
        X, U, f = self.xnames, self.unames, self.f
        d = differentiate
        if name == "f":
            return list(f), (self.n,)
        if name == "fx":
            return [d(fk, a) for fk in f for a in X], (self.n, self.n)
        if name == "fu":
            return [d(fk, c) for fk in f for c in U], (self.n, self.m)
        if name == "ft":
            return [d(fk, "t") for fk in f], (self.n,)
        if name == "fxx":
            return [d(d(fk, a), b) for fk in f for a in X for b in X], (self.n, self.n, self.n)
        if name == "fxu":
            return [d(d(fk, a), c) for fk in f for a in X for c in U], (self.n, self.n, self.m)
        if name == "fuu":
            return [d(d(fk, c), e) for fk in f for c in U for e in U], (self.n, self.m, self.m)
        if name == "ftt":
            return [d(d(fk, "t"), "t") for fk in f], (self.n,)
        if name == "ftx":
            return [d(d(fk, "t"), a) for fk in f for a in X], (self.n, self.n)
        if name == "ftu":
            return [d(d(fk, "t"), c) for fk in f for c in U], (self.n, self.m)
        raise KeyError(name)

    def eval(self, name: str, t, x, u) -> np.ndarray:
        """Evaluate a derivative group at stacked points.

        ``t`` has shape ``(K,)``, ``x`` ``(K, n)``, ``u`` ``(K, m)``; the
        result has shape ``(K,) + group_shape``.
        """
        if name not in self._compiled:
            exprs, shape = self._group(name)
            self._compiled[name] = (compile_exprs(exprs, self.variables, backend="numpy"), shape)
        fn, shape = self._compiled[name]
        t = np.atleast_1d(np.asarray(t, float))
        x = np.atleast_2d(np.asarray(x, float))
        u = np.atleast_2d(np.asarray(u, float))
        K = x.shape[0]
        t = np.broadcast_to(t, (K,))
        args = [t] + [x[:, i] for i in range(self.n)] + [u[:, i] for i in range(self.m)]
        vals = fn(*args)
        out = np.stack([np.broadcast_to(np.asarray(v, float), (K,)) for v in vals], axis=-1)
        return out.reshape((K,) + shape)

    def rhs(self, t: float, x, u) -> np.ndarray:
        return np.array(self._f_scalar(float(t), *map(float, x), *map(float, u)))


def grid_function(spec, times: np.ndarray, dim: int) -> np.ndarray:
    """Sample a control-like input on the grid: callable, constant, or array."""
    times = np.asarray(times, float)
    if callable(spec):
        vals = np.array([np.asarray(spec(t), float).reshape(dim) for t in times])
    else:
        arr = np.asarray(spec, float)
        if arr.ndim <= 1:
            vals = np.broadcast_to(arr.reshape(-1) if arr.ndim else arr, (len(times), dim)).copy()
        else:
            vals = arr.copy()
    if vals.shape != (len(times), dim):
        raise ValueError(f"grid function has shape {vals.shape}, expected {(len(times), dim)}")
    return vals


def _mid(values: np.ndarray) -> np.ndarray:
    return 0.5 * (values[:-1] + values[1:])


@dataclass(eq=False)
class Trajectory:
    """Uniform-grid chart trajectory with piecewise-linear controls."""

    times: np.ndarray
    states: np.ndarray
    controls: np.ndarray
    velocities: np.ndarray
    horizon: str = "fixed"
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def h(self) -> float:
        return (self.times[-1] - self.times[0]) / self.N

    def midpoints(self):
        """(t, x, u) at cell midpoints."""
        if "mid" not in self._cache:
            xm, fm = hermite_midpoints(self.states, self.velocities, self.h)
            self._cache["mid"] = (_mid(self.times), xm, _mid(self.controls), fm)
        t, x, u, _ = self._cache["mid"]
        return t, x, u

    def mid_velocities(self) -> np.ndarray:
        self.midpoints()
        return self._cache["mid"][3]

    def coefficients(self, sys: ControlSystem, name: str):
        """Derivative group of ``sys`` at nodes and at midpoints (cached)."""
        key = (id(sys), name)
        if key not in self._cache:
            tm, xm, um = self.midpoints()
            nodes = sys.eval(name, self.times, self.states, self.controls)
            mids = sys.eval(name, tm, xm, um)
            self._cache[key] = (nodes, mids)
        return self._cache[key]


# ---------------------------------------------------------------------------


def integrate_state(sys: ControlSystem, M: Manifold, x0, u, T: float, N: int, t0: float = 0.0) -> Trajectory:
    """RK4 solution of the chart state equation on N uniform steps."""
    if N < 2 or N % 2:
        raise ValueError("N must be even and at least 2")
    if M.dim != sys.n:
        raise ValueError("manifold and system dimensions differ")
    times = t0 + np.linspace(0.0, T, N + 1)
    U = grid_function(u, times, sys.m)
    h = T / N
    X = np.empty((N + 1, sys.n))
    F = np.empty((N + 1, sys.n))
    X[0] = np.asarray(x0, float)
    try:
        for i in range(N):
            t, x = times[i], X[i]
            um = 0.5 * (U[i] + U[i + 1])
            k1 = sys.rhs(t, x, U[i])
            F[i] = k1
            k2 = sys.rhs(t + 0.5 * h, x + 0.5 * h * k1, um)
            k3 = sys.rhs(t + 0.5 * h, x + 0.5 * h * k2, um)
            k4 = sys.rhs(t + h, x + h * k3, U[i + 1])
            X[i + 1] = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if not np.all(np.isfinite(X[i + 1])):
                raise IntegrationError("non-finite state", i + 1)
        F[N] = sys.rhs(times[N], X[N], U[N])
    except (ArithmeticError, ValueError) as exc:
        if isinstance(exc, IntegrationError):
            raise
        raise IntegrationError(f"state integration failed: {exc}", i) from exc
    return Trajectory(times=times, states=X, controls=U, velocities=F)


def integrate_adjoint(sys: ControlSystem, M: Manifold, traj: Trajectory, p_T) -> np.ndarray:
    """Backward RK4 for p' = -(df/dxi)^T p from p(T) = p_T.

    Christoffel terms cancel in chart components, so the manifold only
    enters through the trajectory. ``p_T`` may be ``(n,)`` or ``(n, k)``.
    """
    fx_n, fx_m = traj.coefficients(sys, "fx")
    A_n = -np.swapaxes(fx_n, -1, -2)
    A_m = -np.swapaxes(fx_m, -1, -2)
    return rk4_linear(A_n, A_m, np.asarray(p_T, float), traj.h, backward=True)


def _forcing_u(sys, traj, v):
    v_n = grid_function(v, traj.times, sys.m)
    fu_n, fu_m = traj.coefficients(sys, "fu")
    return v_n, np.einsum("kac,kc->ka", fu_n, v_n), np.einsum("kac,kc->ka", fu_m, _mid(v_n))


def integrate_first_variation(sys: ControlSystem, M: Manifold, traj: Trajectory, v, X0=None) -> np.ndarray:
    """X' = (df/dxi) X + (df/du) v in chart components, X(0) = X0 (default 0)."""
    fx_n, fx_m = traj.coefficients(sys, "fx")
    _, b_n, b_m = _forcing_u(sys, traj, v)
    X0 = np.zeros(sys.n) if X0 is None else np.asarray(X0, float)
    return rk4_linear(fx_n, fx_m, X0, traj.h, b_n, b_m)


def integrate_first_variation_free_time(
    sys: ControlSystem, M: Manifold, traj: Trajectory, xi, v, X0=None, T_bar: float | None = None
) -> np.ndarray:
    """First variation for a pair (xi, v) of time-scaling and control directions.

    X' = (df/dxi) X + (1/T) (int_0^t xi) f_t + (xi(t)/T) f + (df/du) v.
    """
    T_bar = traj.T if T_bar is None else float(T_bar)
    fx_n, fx_m = traj.coefficients(sys, "fx")
    f_n, f_m = traj.coefficients(sys, "f")
    ft_n, ft_m = traj.coefficients(sys, "ft")
    _, b_n, b_m = _forcing_u(sys, traj, v)
    xi_n = grid_function(xi, traj.times, 1)[:, 0]
    I_n, I_m = running_trapezoid(xi_n, traj.h)
    b_n = b_n + (I_n[:, None] * ft_n + xi_n[:, None] * f_n) / T_bar
    b_m = b_m + (I_m[:, None] * ft_m + _mid(xi_n)[:, None] * f_m) / T_bar
    X0 = np.zeros(sys.n) if X0 is None else np.asarray(X0, float)
    return rk4_linear(fx_n, fx_m, X0, traj.h, b_n, b_m)


# ---------------------------------------------------------------------------
# Second variation


def _hermite_field_mid(values, derivs, h):
    return 0.5 * (values[:-1] + values[1:]) + (h / 8.0) * (derivs[:-1] - derivs[1:])


def second_variation_coefficients(sys, M, t, x, u, X, v):
    """Chart forcing of the second variation at stacked points.

    Returns ``(nabla_f, fu, s)`` where ``nabla_f[k, a] = df^k/dxi_a +
    Gamma^k_{aj} f^j`` and ``s`` is the chart vector

        1/2 nabla^2 f(X, X) + nabla_u nabla_x f(X, v) + 1/2 d2f/du2(v, v)
        - 1/2 c,    with <c, Y> = R(Y, X, f, X).
    """
    f = sys.eval("f", t, x, u)
    fx = sys.eval("fx", t, x, u)
    fu = sys.eval("fu", t, x, u)
    fxx = sys.eval("fxx", t, x, u)
    fxu = sys.eval("fxu", t, x, u)
    fuu = sys.eval("fuu", t, x, u)
    G = christoffel_at(M, x)
    dG = christoffel_grad_at(M, x)
    nf = fx + np.einsum("...kaj,...j->...ka", G, f)
    d_nf = fxx + np.einsum("...kajb,...j->...kab", dG, f) + np.einsum("...kaj,...jb->...kab", G, fx)
    hess_f = (
        d_nf
        + np.einsum("...kbj,...ja->...kab", G, nf)
        - np.einsum("...cba,...kc->...kab", G, nf)
    )
    s = 0.5 * np.einsum("...kab,...a,...b->...k", hess_f, X, X)
    mixed = fxu + np.einsum("...kaj,...jc->...kac", G, fu)
    s = s + np.einsum("...kac,...a,...c->...k", mixed, X, v)
    s = s + 0.5 * np.einsum("...kcd,...c,...d->...k", fuu, v, v)
    s = s - 0.5 * curvature_vector(M, x, X, f)
    return nf, fu, s


def integrate_second_variation(
    sys: ControlSystem,
    M: Manifold,
    traj: Trajectory,
    frame: ParallelFrame,
    X: np.ndarray,
    v,
    sigma,
    W=None,
) -> np.ndarray:
    """Second variation Y in parallel-frame components.

    Y' = F_x Y + F_u sigma + S with F_x = D (nabla f) E, F_u = D df/du and
    S = D s (see :func:`second_variation_coefficients`); Y(0) = frame
    components of W (default 0). ``X`` is the first variation for ``v`` in
    chart components on the grid.
    """
    if not M.is_flat and M.dim != 2:
        raise ValueError("second variation supports flat or two-dimensional manifolds")
    h = traj.h
    v_n = grid_function(v, traj.times, sys.m)
    s_n = grid_function(sigma, traj.times, sys.m)
    fx_n, _ = traj.coefficients(sys, "fx")
    fu_n, _ = traj.coefficients(sys, "fu")
    dX = np.einsum("kab,kb->ka", fx_n, X) + np.einsum("kac,kc->ka", fu_n, v_n)
    X_m = _hermite_field_mid(X, dX, h)
    tm, xm, um = traj.midpoints()

    def assemble(t, x, u, Xk, vk, sk, E, D):
        nf, fu, s = second_variation_coefficients(sys, M, t, x, u, Xk, vk)
        Fx = D @ nf @ E
        Fu = D @ fu
        b = np.einsum("kij,kj->ki", Fu, sk) + np.einsum("kij,kj->ki", D, s)
        return Fx, b

    Fx_n, b_n = assemble(traj.times, traj.states, traj.controls, X, v_n, s_n, frame.E, frame.D)
    Fx_m, b_m = assemble(tm, xm, um, X_m, _mid(v_n), _mid(s_n), frame.E_mid, frame.D_mid)
    W0 = np.zeros(sys.n) if W is None else frame.D[0] @ np.asarray(W, float)
    return rk4_linear(Fx_n, Fx_m, W0, h, b_n, b_m)


def flow_perturbed(
    sys: ControlSystem,
    M: Manifold,
    x0,
    u,
    T: float,
    N: int,
    eps: float,
    v=0.0,
    sigma=0.0,
    X0=None,
    W=None,
) -> Trajectory:
    """Trajectory for control u + eps v + eps^2 sigma from exp_{x0}(eps X0 + eps^2 W)."""
    times = np.linspace(0.0, T, N + 1)
    U = grid_function(u, times, sys.m)
    V = grid_function(v, times, sys.m)
    S = grid_function(sigma, times, sys.m)
    n = sys.n
    shift = eps * (np.zeros(n) if X0 is None else np.asarray(X0, float))
    shift = shift + eps**2 * (np.zeros(n) if W is None else np.asarray(W, float))
    start = geodesic_shoot(M, x0, shift, 1.0) if np.any(shift) else np.asarray(x0, float)
    return integrate_state(sys, M, start, U + eps * V + eps**2 * S, T, N)
