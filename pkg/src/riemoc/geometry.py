"""Chart-level Riemannian geometry for flat R^n and 2-D graph surfaces.

A graph surface is {(x1, x2, a(x1, x2))} with the metric induced from R^3. In
the chart (x1, x2) everything is explicit in the height derivatives:

    g_il        = delta_il + a_i a_l
    Gamma^l_ip  = a_l a_ip / (1 + |grad a|^2)
    K           = (a11 a22 - a12^2) / (1 + a1^2 + a2^2)^2

Point-wise functions accept either one point ``q`` of shape ``(n,)`` or a
stack of shape ``(..., n)`` and broadcast accordingly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np

from .exprlang import Expr, compile_exprs, differentiate, parse
from .numerics import rk4_linear

__all__ = [
    "Manifold",
    "MetricInfo",
    "TangentVec",
    "Covector",
    "ParallelFrame",
    "GeometryError",
    "LogMapError",
    "chart_names",
    "metric_at",
    "metric_tensor",
    "christoffel_at",
    "christoffel_grad_at",
    "sectional_curvature_at",
    "norm_at",
    "pair_at",
    "curvature_term",
    "curvature_vector",
    "hermite_midpoints",
    "parallel_transport",
    "build_parallel_frame",
    "geodesic_shoot",
    "log_map",
    "covariant_hessian",
    "covariant_hessian_scalar",
]


class GeometryError(ValueError):
    pass


class LogMapError(GeometryError):
    pass


def chart_names(n: int, prefix: str = "x") -> list[str]:
    return [f"{prefix}{i + 1}" for i in range(n)]


@dataclass(frozen=True)
class Manifold:
    """Flat R^n (``height is None``) or the graph of ``height(x1, x2)``."""

    dim: int
    height: Expr | None = None
    fd_step: float = 1e-5
    _derivs: object = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.height is None:
            if self.dim < 1:
                raise GeometryError("dimension must be positive")
            return
        if self.dim != 2:
            raise GeometryError("graph manifolds are two-dimensional")
        names = ("x1", "x2")
        extra = self.height.free_vars() - set(names)
        if extra:
            raise GeometryError(f"height uses non-chart variables {sorted(extra)}")
        a = self.height
        a1, a2 = differentiate(a, "x1"), differentiate(a, "x2")
        exprs = [a, a1, a2, differentiate(a1, "x1"), differentiate(a1, "x2"), differentiate(a2, "x2")]
        object.__setattr__(self, "_derivs", compile_exprs(exprs, names, backend="numpy"))

    @classmethod
    def flat(cls, n: int) -> "Manifold":
        return cls(dim=n)

    @classmethod
    def graph(cls, height: str | Expr, fd_step: float = 1e-5) -> "Manifold":
        if isinstance(height, str):
            height = parse(height, ("x1", "x2"))
        return cls(dim=2, height=height, fd_step=fd_step)

    @property
    def is_flat(self) -> bool:
        return self.height is None

    @property
    def kind(self) -> str:
        return "flat" if self.is_flat else "graph"

    def height_derivs(self, q):
        """Return ``(a, a1, a2, a11, a12, a22)`` evaluated at ``q``."""
        if self.is_flat:
            raise GeometryError("flat manifold has no height function")
        q = np.asarray(q, dtype=float)
        vals = self._derivs(q[..., 0], q[..., 1])
        vals = tuple(np.asarray(v, dtype=float) for v in vals)
        for v in vals:
            if not np.all(np.isfinite(v)):
                raise GeometryError("non-finite height derivative")
        return vals

    def embed(self, q) -> np.ndarray:
        """Point in R^3 for graphs (coordinates unchanged for flat)."""
        q = np.asarray(q, dtype=float)
        if self.is_flat:
            return q.copy()
        a = self.height_derivs(q)[0]
        return np.concatenate([q, a[..., None]], axis=-1)


@dataclass(frozen=True)
class MetricInfo:
    G: np.ndarray
    Ginv: np.ndarray
    sqrtG: np.ndarray
    sqrtGinv: np.ndarray


def _check_point(M: Manifold, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape[-1] != M.dim:
        raise GeometryError(f"point has {q.shape[-1]} coordinates, manifold dim is {M.dim}")
    if not np.all(np.isfinite(q)):
        raise GeometryError("non-finite chart coordinates")
    return q


def metric_tensor(M: Manifold, q) -> np.ndarray:
    q = _check_point(M, q)
    n = M.dim
    eye = np.broadcast_to(np.eye(n), q.shape[:-1] + (n, n))
    if M.is_flat:
        return eye.copy()
    _, a1, a2, *_ = M.height_derivs(q)
    grad = np.stack([a1, a2], axis=-1)
    return eye + grad[..., :, None] * grad[..., None, :]


def metric_at(M: Manifold, q) -> MetricInfo:
    """Metric, inverse, and symmetric square roots at a single point."""
    G = metric_tensor(M, q)
    w, V = np.linalg.eigh(G)
    sq = (V * np.sqrt(w)) @ V.T
    isq = (V / np.sqrt(w)) @ V.T
    return MetricInfo(G=G, Ginv=np.linalg.inv(G), sqrtG=sq, sqrtGinv=isq)


def christoffel_at(M: Manifold, q) -> np.ndarray:
    """Christoffel symbols indexed ``[..., l, i, p]`` for Gamma^l_{ip}."""
    q = _check_point(M, q)
    n = M.dim
    if M.is_flat:
        return np.zeros(q.shape[:-1] + (n, n, n))
    _, a1, a2, a11, a12, a22 = M.height_derivs(q)
    grad = np.stack([a1, a2], axis=-1)
    hess = np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)
    w = 1.0 + a1 * a1 + a2 * a2
    return grad[..., :, None, None] * hess[..., None, :, :] / w[..., None, None, None]


def christoffel_grad_at(M: Manifold, q, step: float | None = None) -> np.ndarray:
    """Central-difference derivatives ``[..., l, i, p, k]`` = dGamma^l_{ip}/dxi_k."""
    q = _check_point(M, q)
    n = M.dim
    if M.is_flat:
        return np.zeros(q.shape[:-1] + (n, n, n, n))
    h = M.fd_step if step is None else step
    out = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        out.append((christoffel_at(M, q + e) - christoffel_at(M, q - e)) / (2.0 * h))
    return np.stack(out, axis=-1)


def sectional_curvature_at(M: Manifold, q) -> np.ndarray | float:
    q = _check_point(M, q)
    if M.is_flat:
        return np.zeros(q.shape[:-1]) if q.ndim > 1 else 0.0
    _, a1, a2, a11, a12, a22 = M.height_derivs(q)
    K = (a11 * a22 - a12 * a12) / (1.0 + a1 * a1 + a2 * a2) ** 2
    return float(K) if np.ndim(K) == 0 else K


# ---------------------------------------------------------------------------
# Vectors and covectors


@dataclass(frozen=True)
class TangentVec:
    base: np.ndarray
    components: np.ndarray
    frame: str = "chart"


@dataclass(frozen=True)
class Covector:
    base: np.ndarray
    components: np.ndarray
    frame: str = "chart"


def norm_at(M: Manifold, v: TangentVec | Covector) -> float:
    if v.frame != "chart":
        raise GeometryError("norm_at expects chart components")
    G = metric_tensor(M, v.base)
    c = np.asarray(v.components, dtype=float)
    if isinstance(v, Covector):
        return float(np.sqrt(c @ np.linalg.solve(G, c)))
    return float(np.sqrt(c @ G @ c))


def pair_at(M: Manifold, a: TangentVec | Covector, b: TangentVec | Covector) -> float:
    """Metric inner product of two vectors (or two covectors), duality pairing otherwise."""
    if not np.allclose(np.asarray(a.base, float), np.asarray(b.base, float), rtol=0, atol=1e-12):
        raise GeometryError("pairing requires a common base point")
    if a.frame != "chart" or b.frame != "chart":
        raise GeometryError("pair_at expects chart components")
    x = np.asarray(a.components, float)
    y = np.asarray(b.components, float)
    va, vb = isinstance(a, TangentVec), isinstance(b, TangentVec)
    if va != vb:
        return float(x @ y)
    G = metric_tensor(M, a.base)
    if va:
        return float(x @ G @ y)
    return float(x @ np.linalg.solve(G, y))


def curvature_term(M: Manifold, q, p, X, f) -> float:
    """R(p~, X, f, X) for the vector p~ dual to covector ``p``.

    Two-dimensional identity: R = -K (p(f) |X|^2 - p(X) <f, X>). Zero on flat
    manifolds of any dimension.
    """
    if M.is_flat:
        return 0.0
    G = metric_tensor(M, q)
    p, X, f = (np.asarray(z, float) for z in (p, X, f))
    K = sectional_curvature_at(M, q)
    return float(-K * ((p @ f) * (X @ G @ X) - (p @ X) * (f @ G @ X)))


def curvature_vector(M: Manifold, q, X, f) -> np.ndarray:
    """Vector c with <c, Y> = R(Y, X, f, X) for every Y, in chart components.

    Equals -K (|X|^2 f - <f, X> X); used by the chart form of the second
    variation. Vectorised over leading axes.
    """
    X = np.asarray(X, float)
    f = np.asarray(f, float)
    if M.is_flat:
        return np.zeros(np.broadcast_shapes(X.shape, f.shape))
    G = metric_tensor(M, q)
    K = np.asarray(sectional_curvature_at(M, q))
    xx = np.einsum("...i,...ij,...j->...", X, G, X)
    fx = np.einsum("...i,...ij,...j->...", f, G, X)
    return -K[..., None] * (xx[..., None] * f - fx[..., None] * X)


# ---------------------------------------------------------------------------
# Transport along sampled curves


def hermite_midpoints(points: np.ndarray, velocities: np.ndarray, h: float):
    """Cubic Hermite value and derivative at the midpoint of every grid cell."""
    x0, x1 = points[:-1], points[1:]
    f0, f1 = velocities[:-1], velocities[1:]
    xm = 0.5 * (x0 + x1) + (h / 8.0) * (f0 - f1)
    fm = 1.5 * (x1 - x0) / h - 0.25 * (f0 + f1)
    return xm, fm


def _transport_coefficients(M: Manifold, points, velocities, h):
    """Per-node and per-midpoint matrices A with dV/dt = A V (vector transport)."""
    xm, fm = hermite_midpoints(points, velocities, h)
    A_nodes = -np.einsum("...kij,...i->...kj", christoffel_at(M, points), velocities)
    A_mid = -np.einsum("...kij,...i->...kj", christoffel_at(M, xm), fm)
    return A_nodes, A_mid


def _grid_step(times) -> float:
    times = np.asarray(times, float)
    h = (times[-1] - times[0]) / (len(times) - 1)
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=1e-12):
        raise GeometryError("transport requires a uniform grid")
    return h


def parallel_transport(
    M: Manifold, times, points, velocities, V0, covector: bool = False
) -> np.ndarray:
    """Transport ``V0`` (vector, or covector if ``covector``) along a sampled curve.

    ``points``/``velocities`` are the curve and its derivative on the uniform
    grid ``times``; RK4 uses cubic Hermite midpoints. Returns ``(N+1, n)``.
    """
    points = np.asarray(points, float)
    velocities = np.asarray(velocities, float)
    h = _grid_step(times)
    A_nodes, A_mid = _transport_coefficients(M, points, velocities, h)
    if covector:
        A_nodes = -np.swapaxes(A_nodes, -1, -2)
        A_mid = -np.swapaxes(A_mid, -1, -2)
    return rk4_linear(A_nodes, A_mid, np.asarray(V0, float), h)


@dataclass(frozen=True)
class ParallelFrame:
    """Orthonormal frame transported along a trajectory.

    ``E[i]`` has the chart components of e_1..e_n as columns; ``D[i]`` has the
    dual covectors d_1..d_n as rows. ``E_mid`` holds the frame at cell
    midpoints (Hermite interpolation of the transported frame) for RK4 use.
    """

    times: np.ndarray
    E: np.ndarray
    D: np.ndarray
    E_mid: np.ndarray
    D_mid: np.ndarray

    def to_chart(self, Y: np.ndarray) -> np.ndarray:
        return np.einsum("tij,tj->ti", self.E, Y)

    def from_chart(self, V: np.ndarray) -> np.ndarray:
        return np.einsum("tij,tj->ti", self.D, V)

    def gram_defect(self, M: Manifold, points) -> float:
        G = metric_tensor(M, points)
        gram = np.einsum("tki,tkl,tlj->tij", self.E, G, self.E)
        return float(np.max(np.abs(gram - np.eye(self.E.shape[-1]))))

    def duality_defect(self) -> float:
        return float(np.max(np.abs(self.D @ self.E - np.eye(self.E.shape[-1]))))


def orthonormal_basis(G: np.ndarray) -> np.ndarray:
    """Gram-Schmidt of the coordinate basis with respect to ``G`` (columns)."""
    n = G.shape[0]
    E = np.zeros((n, n))
    for i in range(n):
        v = np.zeros(n)
        v[i] = 1.0
        for j in range(i):
            v = v - (E[:, j] @ G @ v) * E[:, j]
        E[:, i] = v / np.sqrt(v @ G @ v)
    return E


def build_parallel_frame(M: Manifold, times, points, velocities) -> ParallelFrame:
    points = np.asarray(points, float)
    velocities = np.asarray(velocities, float)
    times = np.asarray(times, float)
    h = _grid_step(times)
    E0 = orthonormal_basis(metric_tensor(M, points[0]))
    A_nodes, A_mid = _transport_coefficients(M, points, velocities, h)
    E = rk4_linear(A_nodes, A_mid, E0, h)
    # Dual basis transported as covectors (rows), i.e. dD/dt = -D A.
    Dt = rk4_linear(-np.swapaxes(A_nodes, -1, -2), -np.swapaxes(A_mid, -1, -2), np.linalg.inv(E0).T, h)
    D = np.swapaxes(Dt, -1, -2)
    # Frame derivatives at nodes for Hermite midpoints.
    dE = A_nodes @ E
    dD = -D @ A_nodes
    E_mid = 0.5 * (E[:-1] + E[1:]) + (h / 8.0) * (dE[:-1] - dE[1:])
    D_mid = 0.5 * (D[:-1] + D[1:]) + (h / 8.0) * (dD[:-1] - dD[1:])
    return ParallelFrame(times=times, E=E, D=D, E_mid=E_mid, D_mid=D_mid)


# ---------------------------------------------------------------------------
# Geodesics


def _geodesic_rhs(M, x, v):
    Gam = christoffel_at(M, x)
    return v, -np.einsum("kij,i,j->k", Gam, v, v)


def geodesic_shoot(M: Manifold, q, V, t: float = 1.0, steps: int = 64, return_velocity: bool = False):
    """exp_q(tV) by RK4 on the geodesic equation."""
    x = np.array(q, dtype=float)
    v = np.array(V, dtype=float)
    if M.is_flat:
        out = x + t * v
        return (out, v.copy()) if return_velocity else out
    h = t / steps
    for _ in range(steps):
        k1x, k1v = _geodesic_rhs(M, x, v)
        k2x, k2v = _geodesic_rhs(M, x + 0.5 * h * k1x, v + 0.5 * h * k1v)
        k3x, k3v = _geodesic_rhs(M, x + 0.5 * h * k2x, v + 0.5 * h * k2v)
        k4x, k4v = _geodesic_rhs(M, x + h * k3x, v + h * k3v)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
    return (x, v) if return_velocity else x


def log_map(
    M: Manifold, q, q_target, tol: float = 1e-13, max_iter: int = 50, steps: int = 64
) -> np.ndarray:
    """Initial velocity V with geodesic_shoot(q, V, 1) = q_target (Newton shooting)."""
    q = np.asarray(q, float)
    target = np.asarray(q_target, float)
    if M.is_flat:
        return target - q
    V = target - q
    scale = max(1.0, float(np.max(np.abs(V))))
    for _ in range(max_iter):
        r = geodesic_shoot(M, q, V, 1.0, steps) - target
        if np.max(np.abs(r)) <= tol * scale:
            return V
        J = np.empty((M.dim, M.dim))
        d = 1e-7 * max(1.0, float(np.linalg.norm(V)))
        for k in range(M.dim):
            e = np.zeros(M.dim)
            e[k] = d
            J[:, k] = (geodesic_shoot(M, q, V + e, 1.0, steps) - geodesic_shoot(M, q, V - e, 1.0, steps)) / (2 * d)
        V = V - np.linalg.solve(J, r)
    r = geodesic_shoot(M, q, V, 1.0, steps) - target
    if np.max(np.abs(r)) <= 1e-10 * scale:
        return V
    raise LogMapError(f"log map did not converge in {max_iter} iterations (residual {np.max(np.abs(r)):.3e})")


# ---------------------------------------------------------------------------
# Covariant Hessians


def covariant_hessian(M: Manifold, q, grad, hess) -> np.ndarray:
    """nabla^2 zeta as a matrix from the chart gradient and Hessian of zeta."""
    Gam = christoffel_at(M, q)
    return np.asarray(hess, float) - np.einsum("...eli,...e->...il", Gam, np.asarray(grad, float))


@lru_cache(maxsize=256)
def _scalar_derivs(zeta: Expr, names: tuple[str, ...]):
    grads = [differentiate(zeta, v) for v in names]
    hess = [differentiate(g, v) for g in grads for v in names]
    return compile_exprs(grads + hess, names, backend="math")


def covariant_hessian_scalar(
    M: Manifold, zeta: Expr, q, X, Y, names: Sequence[str] | None = None
) -> float:
    """nabla^2 zeta (X, Y) = d2zeta(X, Y) - Gamma^e_{li} d_e zeta X^i Y^l."""
    n = M.dim
    names = tuple(names) if names is not None else tuple(chart_names(n))
    vals = _scalar_derivs(zeta, names)(*[float(c) for c in q])
    grad = np.array(vals[:n])
    hess = np.array(vals[n:]).reshape(n, n)
    H = covariant_hessian(M, q, grad, hess)
    return float(np.asarray(X, float) @ H @ np.asarray(Y, float))
