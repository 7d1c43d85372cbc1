"""Adjacent cones and second-order adjacent sets of simple convex control sets.

Every set in scope (ball, box, polyhedron) yields cones that are finite
intersections of halfspaces, so both cone types are stored as normal
vectors (plus offsets for the shifted second-order sets).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, lsq_linear, minimize

__all__ = [
    "ConvexSet",
    "ConeRepr",
    "ShiftedConeRepr",
    "ConeError",
    "adjacent_cone",
    "second_order_set",
    "support_over_cone",
    "support_over_cone_sampled",
    "sup_affine_over_shifted",
    "sup_linear_nodes",
    "contains",
    "second_order_distance_ratio",
]

MEMBERSHIP_TOL = 1e-9


class ConeError(ValueError):
    pass


@dataclass(frozen=True)
class ConvexSet:
    """Closed convex control set: ``ball``, ``box`` or ``polyhedron`` {u: A u <= b}."""

    kind: str
    center: np.ndarray | None = None
    radius: float | None = None
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None

    @classmethod
    def ball(cls, center, radius: float) -> "ConvexSet":
        if radius <= 0:
            raise ConeError("ball radius must be positive")
        return cls("ball", center=np.asarray(center, float), radius=float(radius))

    @classmethod
    def box(cls, lower, upper) -> "ConvexSet":
        lo, hi = np.asarray(lower, float), np.asarray(upper, float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ConeError("box needs lower <= upper of equal length")
        return cls("box", lower=lo, upper=hi)

    @classmethod
    def polyhedron(cls, A, b) -> "ConvexSet":
        A, b = np.atleast_2d(np.asarray(A, float)), np.asarray(b, float)
        if A.shape[0] != b.shape[0]:
            raise ConeError("polyhedron needs one offset per row")
        res = linprog(np.zeros(A.shape[1]), A_ub=A, b_ub=b, bounds=[(None, None)] * A.shape[1], method="highs")
        if res.status == 2:
            raise ConeError("polyhedron is empty")
        return cls("polyhedron", A=A, b=b)

    @property
    def dim(self) -> int:
        if self.kind == "ball":
            return self.center.shape[0]
        if self.kind == "box":
            return self.lower.shape[0]
        return self.A.shape[1]

    def contains(self, u, tol: float = MEMBERSHIP_TOL) -> bool:
        u = np.asarray(u, float)
        if self.kind == "ball":
            return bool(np.linalg.norm(u - self.center) <= self.radius + tol)
        if self.kind == "box":
            return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))
        return bool(np.all(self.A @ u <= self.b + tol))

    def distance(self, u) -> float:
        """Euclidean distance from ``u`` to the set."""
        u = np.asarray(u, float)
        if self.kind == "ball":
            return max(0.0, float(np.linalg.norm(u - self.center)) - self.radius)
        if self.kind == "box":
            return float(np.linalg.norm(u - np.clip(u, self.lower, self.upper)))
        if self.contains(u, 0.0):
            return 0.0
        cons = {"type": "ineq", "fun": lambda w: self.b - self.A @ w, "jac": lambda w: -self.A}
        res = minimize(lambda w: 0.5 * np.sum((w - u) ** 2), u, jac=lambda w: w - u,
                       constraints=[cons], method="SLSQP", options={"ftol": 1e-15, "maxiter": 500})
        return float(np.linalg.norm(res.x - u))


@dataclass(frozen=True)
class ConeRepr:
    """{v : n_k . v <= 0 for every row n_k of ``normals``}."""

    dim: int
    normals: np.ndarray = field(default=None)

    def __post_init__(self):
        nrm = np.zeros((0, self.dim)) if self.normals is None else np.atleast_2d(np.asarray(self.normals, float))
        object.__setattr__(self, "normals", nrm.reshape(-1, self.dim))

    @property
    def is_whole_space(self) -> bool:
        return self.normals.shape[0] == 0

    def contains(self, v, tol: float = MEMBERSHIP_TOL) -> bool:
        return bool(np.all(self.normals @ np.asarray(v, float) <= tol))


@dataclass(frozen=True)
class ShiftedConeRepr:
    """{w : n_k . w <= beta_k}; ``empty`` flags an infeasible system."""

    dim: int
    normals: np.ndarray = field(default=None)
    offsets: np.ndarray = field(default=None)
    empty: bool = False

    def __post_init__(self):
        nrm = np.zeros((0, self.dim)) if self.normals is None else np.atleast_2d(np.asarray(self.normals, float))
        nrm = nrm.reshape(-1, self.dim)
        off = np.zeros(0) if self.offsets is None else np.asarray(self.offsets, float).reshape(-1)
        if off.shape[0] != nrm.shape[0]:
            raise ConeError("one offset per halfspace required")
        object.__setattr__(self, "normals", nrm)
        object.__setattr__(self, "offsets", off)

    def contains(self, w, tol: float = MEMBERSHIP_TOL) -> bool:
        if self.empty:
            return False
        return bool(np.all(self.normals @ np.asarray(w, float) <= self.offsets + tol))


def contains(obj, point, tol: float = MEMBERSHIP_TOL) -> bool:
    return obj.contains(point, tol)


def _active_normals(U: ConvexSet, u: np.ndarray, tol: float) -> list[np.ndarray]:
    if U.kind == "ball":
        d = u - U.center
        return [d] if np.linalg.norm(d) >= U.radius - tol else []
    if U.kind == "box":
        out = []
        for i in range(U.dim):
            e = np.zeros(U.dim)
            if u[i] <= U.lower[i] + tol:
                e[i] = -1.0
                out.append(e.copy())
                e[i] = 0.0
            if u[i] >= U.upper[i] - tol:
                e[i] = 1.0
                out.append(e)
        return out
    return [U.A[k] for k in range(U.A.shape[0]) if U.A[k] @ u >= U.b[k] - tol]


def adjacent_cone(U: ConvexSet, u, tol: float = MEMBERSHIP_TOL) -> ConeRepr:
    """Adjacent (tangent) cone of the convex set ``U`` at ``u``."""
    u = np.asarray(u, float)
    if not U.contains(u, tol):
        raise ConeError(f"point {u.tolist()} is not in the control set")
    nrm = _active_normals(U, u, tol)
    return ConeRepr(U.dim, np.array(nrm) if nrm else None)


def second_order_set(U: ConvexSet, u, v, tol: float = MEMBERSHIP_TOL) -> ShiftedConeRepr:
    """Second-order adjacent set of ``U`` at ``u`` in direction ``v``.

    Ball: on the boundary with (u-c).v = 0 the quadratic boundary expansion
    gives {w : (u-c).w <= -|v|^2/2}. Flat faces: a constraint active at u with
    n.v = 0 stays as n.w <= 0; constraints with n.v < 0 drop out.
    """
    u = np.asarray(u, float)
    v = np.asarray(v, float)
    cone = adjacent_cone(U, u, tol)
    scale = max(1.0, float(np.linalg.norm(v)))
    if not cone.contains(v, tol * scale):
        raise ConeError("direction is not in the adjacent cone")
    normals, offsets = [], []
    for n in _active_normals(U, u, tol):
        if abs(n @ v) > tol * scale * max(1.0, float(np.linalg.norm(n))):
            continue  # strictly entering: no second-order restriction
        normals.append(n)
        offsets.append(-0.5 * float(v @ v) if U.kind == "ball" else 0.0)
    if not normals:
        return ShiftedConeRepr(U.dim)
    return ShiftedConeRepr(U.dim, np.array(normals), np.array(offsets))


def support_over_cone(cone: ConeRepr, c) -> tuple[float, str]:
    """sup{c.v : v in cone, |v| <= 1} and the method used.

    The supremum equals the norm of the projection of c onto the cone
    (Moreau decomposition). The polar part is the nonnegative least-squares fit of c by
    the normals, so the value is exact for any number of halfspaces.
    """
    c = np.asarray(c, float)
    N = cone.normals
    if N.shape[0] == 0:
        return float(np.linalg.norm(c)), "exact"
    if np.all(N @ c <= 0.0):
        return float(np.linalg.norm(c)), "exact"
    if N.shape[0] == 1:
        n = N[0]
        return float(np.linalg.norm(c - (c @ n) / (n @ n) * n)), "exact"
    # scipy.optimize.nnls (1.15) can stop at a non-optimal point; bounded-variable LS is exact
    lam = lsq_linear(N.T, c, bounds=(0.0, np.inf), method="bvls", tol=1e-14).x
    return float(np.linalg.norm(c - N.T @ lam)), "nnls"


def support_over_cone_sampled(cone: ConeRepr, c, samples: int = 4096, seed: int = 0) -> float:
    """Sampling estimate of :func:`support_over_cone` (used as a test oracle)."""
    c = np.asarray(c, float)
    rng = np.random.default_rng(seed)
    V = rng.normal(size=(samples, cone.dim))
    V /= np.linalg.norm(V, axis=1, keepdims=True)
    ok = np.all(V @ cone.normals.T <= 0.0, axis=1) if cone.normals.shape[0] else np.ones(samples, bool)
    vals = V[ok] @ c
    return max(0.0, float(vals.max())) if vals.size else 0.0


def sup_affine_over_shifted(S: ShiftedConeRepr, c, c0: float = 0.0, tol: float = 1e-12) -> float:
    """sup{c0 + c.w : w in S}; returns ``math.inf`` when unbounded."""
    if S.empty:
        raise ConeError("second-order set is empty")
    c = np.asarray(c, float)
    N, beta = S.normals, S.offsets
    cn = float(np.linalg.norm(c))
    if cn <= tol:
        return float(c0)
    if N.shape[0] == 0:
        return math.inf
    if N.shape[0] == 1:
        n = N[0]
        lam = float(c @ n) / float(n @ n)
        if lam < 0 or np.linalg.norm(c - lam * n) > tol * max(1.0, cn):
            return math.inf
        return float(c0 + lam * beta[0])
    res = linprog(-c, A_ub=N, b_ub=beta, bounds=[(None, None)] * S.dim, method="highs")
    if res.status == 3:
        return math.inf
    if res.status != 0:
        raise ConeError(f"linear program failed: {res.message}")
    return float(c0 - res.fun)


def sup_linear_nodes(sets: list[ShiftedConeRepr], C: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Node-wise sup{C[k, i] . w : w in sets[i]} for many coefficient rows at once.

    ``C`` has shape ``(K, N+1, m)``; returns ``(K, N+1)`` with ``inf`` where
    unbounded. Single-halfspace and empty-normal nodes are vectorised; the
    rest fall back to :func:`sup_affine_over_shifted`.
    """
    C = np.asarray(C, float)
    K, P, m = C.shape
    out = np.empty((K, P))
    norms = np.linalg.norm(C, axis=-1)
    for i, S in enumerate(sets):
        ci = C[:, i, :]
        ni = norms[:, i]
        zero = ni <= tol
        if S.normals.shape[0] == 0:
            out[:, i] = np.where(zero, 0.0, np.inf)
        elif S.normals.shape[0] == 1:
            n = S.normals[0]
            lam = ci @ n / (n @ n)
            resid = np.linalg.norm(ci - lam[:, None] * n, axis=-1)
            ok = (lam >= 0) & (resid <= tol * np.maximum(1.0, ni))
            out[:, i] = np.where(zero, 0.0, np.where(ok, lam * S.offsets[0], np.inf))
        else:
            out[:, i] = [sup_affine_over_shifted(S, ci[k], 0.0, tol) for k in range(K)]
    return out


def second_order_distance_ratio(U: ConvexSet, u, v, eps=(1e-1, 1e-2, 1e-3, 1e-4)) -> float:
    """max over eps of d_U(u + eps v) / eps^2; a bounded value supports the
    quadratic distance hypothesis of the second-order conditions."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    return max(U.distance(u + e * v) / e**2 for e in eps)
