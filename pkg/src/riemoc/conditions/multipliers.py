"""The polyhedral cone of Lagrange multipliers of a candidate.

The adjoint is linear in l, so one backward integration per basis vector of
R^(r+j+k) gives every p^l as a linear combination. Transversality then reads
A l = 0 with A the stacked defects p^(e)(0) + d1 L_e. Together with the sign
pattern (l_i <= 0 on active indices, l_i = 0 on inactive inequalities) the
multipliers form a polyhedral cone whose extreme rays are enumerated with
cdd after reducing to the null space of the equality constraints.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import cdd
import numpy as np

from ..dynamics import ControlSystem, Trajectory, integrate_adjoint
from ..geometry import Manifold
from ..numerics import tail_integrals
from .endpoints import EndpointData
from .hamiltonian import hamiltonian_series

__all__ = [
    "MultiplierFamily",
    "active_set",
    "basis_adjoints",
    "solve_multiplier_cone",
    "restrict_family",
    "extreme_rays",
]

ACTIVE_TOL = 1e-8
EQ_TOL = 1e-7
MAX_EXACT_DIM = 8


def active_set(endpoints: EndpointData, q0, qT, T: float, tol: float = ACTIVE_TOL) -> list[int]:
    """Indices (into l) of objectives and active inequality constraints."""
    vals = endpoints.jet(q0, qT, T).values
    r, j = endpoints.r, endpoints.j
    return list(range(r)) + [r + i for i in range(j) if abs(vals[r + i]) <= tol]


def basis_adjoints(sys: ControlSystem, M: Manifold, traj: Trajectory, endpoints: EndpointData):
    """Adjoints for every basis multiplier and the transversality defect matrix.

    Returns ``(P, A)`` with ``P`` of shape (N+1, n, d) and ``A`` of shape (n, d).
    """
    n = endpoints.n
    J = endpoints.jet(traj.states[0], traj.states[-1], traj.T)
    d1, d2 = J.grad[:, :n], J.grad[:, n:]
    P = integrate_adjoint(sys, M, traj, d2.T)
    A = P[0] + d1.T
    return P, A


def _null_space(E: np.ndarray, d: int, tol: float) -> np.ndarray:
    if E.shape[0] == 0:
        return np.eye(d)
    _, s, Vt = np.linalg.svd(E)
    rank = int(np.sum(s > tol))
    return Vt[rank:].T


def extreme_rays(B: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray]:
    """Extreme rays and lineality basis of {z in R^q : B z <= 0}."""
    if q == 0:
        return np.zeros((0, 0)), np.zeros((0, 0))
    if B.shape[0] == 0:
        return np.zeros((0, q)), np.eye(q)
    rows = np.hstack([np.zeros((B.shape[0], 1)), -B])
    mat = cdd.matrix_from_array(rows.tolist(), rep_type=cdd.RepType.INEQUALITY)
    poly = cdd.polyhedron_from_matrix(mat)
    gen = cdd.copy_generators(poly)
    arr = np.array(gen.array, dtype=float).reshape(-1, q + 1)
    lin = sorted(gen.lin_set)
    rays, lineality = [], []
    for i, row in enumerate(arr):
        z = row[1:]
        if np.linalg.norm(z) <= 1e-14:
            continue
        (lineality if i in lin else rays).append(z)
    return np.array(rays).reshape(-1, q), np.array(lineality).reshape(-1, q)


def _normalize_l1(v: np.ndarray) -> np.ndarray:
    s = np.sum(np.abs(v), axis=-1, keepdims=True)
    return v / np.where(s > 0, s, 1.0)


def _dedupe(rows: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    out: list[np.ndarray] = []
    for r in rows:
        if not any(np.max(np.abs(r - o)) <= tol for o in out):
            out.append(r)
    return np.array(out).reshape(-1, rows.shape[1] if rows.ndim == 2 else 0)


@dataclass
class MultiplierFamily:
    """{l : A l = 0, l_i <= 0 (i in sign_idx), l_i = 0 (i in zero_idx), l != 0}.

    ``rays`` are extreme rays normalised to |l|_1 = 1; ``lineality`` spans the
    largest linear subspace of the cone (empty for pointed cones).
    """

    labels: list[str]
    A: np.ndarray
    sign_idx: list[int]
    zero_idx: list[int]
    null_basis: np.ndarray
    rays: np.ndarray
    lineality: np.ndarray
    adjoints: np.ndarray = field(repr=False)
    extra_rows: np.ndarray | None = field(default=None, repr=False)
    method: str = "cdd"

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def empty(self) -> bool:
        return self.rays.shape[0] == 0 and self.lineality.shape[0] == 0

    def generators(self) -> np.ndarray:
        """Rays followed by both signs of every lineality direction."""
        parts = [self.rays]
        if self.lineality.shape[0]:
            L = _normalize_l1(self.lineality)
            parts += [L, -L]
        return np.vstack(parts) if parts else np.zeros((0, self.dim))

    def contains(self, ell, tol: float = EQ_TOL) -> bool:
        ell = np.asarray(ell, float)
        if np.max(np.abs(ell)) <= tol:
            return False
        scale = max(1.0, float(np.max(np.abs(ell))))
        if np.max(np.abs(self.A @ ell), initial=0.0) > tol * scale:
            return False
        if self.extra_rows is not None and np.max(np.abs(self.extra_rows @ ell), initial=0.0) > tol * scale:
            return False
        if any(ell[i] > tol * scale for i in self.sign_idx):
            return False
        return all(abs(ell[i]) <= tol * scale for i in self.zero_idx)

    def adjoint(self, ell) -> np.ndarray:
        return self.adjoints @ np.asarray(ell, float)

    def sample_cross_section(self, count: int = 10_000, seed: int = 0) -> np.ndarray:
        """Deterministic points of {l in cone : |l|_1 = 1}; generators come first."""
        gens = self.generators()
        if gens.shape[0] == 0:
            return np.zeros((0, self.dim))
        rng = np.random.default_rng(seed)
        R, L = self.rays, self.lineality
        out = [gens]
        extra = max(0, count - gens.shape[0])
        if extra:
            pts = np.zeros((extra, self.dim))
            nR = R.shape[0]
            for s in range(extra):
                z = np.zeros(self.dim)
                if nR:
                    size = int(rng.integers(1, nR + 1))
                    idx = rng.choice(nR, size=size, replace=False)
                    z += rng.dirichlet(np.ones(size)) @ R[idx]
                if L.shape[0]:
                    z += rng.normal(size=L.shape[0]) @ _normalize_l1(L)
                pts[s] = z
            out.append(_normalize_l1(pts))
        S = np.vstack(out)
        return S[np.sum(np.abs(S), axis=1) > 0]


def solve_multiplier_cone(
    sys: ControlSystem,
    M: Manifold,
    traj: Trajectory,
    endpoints: EndpointData,
    active: list[int] | None = None,
    refined: list[int] | None = None,
    eq_tol: float = EQ_TOL,
    extra_rows: np.ndarray | None = None,
    basis: tuple[np.ndarray, np.ndarray] | None = None,
) -> MultiplierFamily:
    """Multiplier cone of the candidate ``traj``.

    ``active`` defaults to :func:`active_set`; ``refined`` (indices allowed
    to be nonzero among objectives and inequalities) imposes the second-order
    zero pattern. ``extra_rows`` adds further homogeneous equalities, e.g. the
    free-time Hamiltonian condition.
    """
    d = endpoints.dim
    r, j = endpoints.r, endpoints.j
    if active is None:
        active = active_set(endpoints, traj.states[0], traj.states[-1], traj.T)
    P, A = basis_adjoints(sys, M, traj, endpoints) if basis is None else basis
    sign_idx = [i for i in range(r + j) if i in active]
    zero_idx = [i for i in range(r + j) if i not in active]
    if refined is not None:
        extra_zero = [i for i in sign_idx if i not in refined]
        sign_idx = [i for i in sign_idx if i in refined]
        zero_idx = sorted(set(zero_idx) | set(extra_zero))
    E = [A]
    if zero_idx:
        E.append(np.eye(d)[zero_idx])
    if extra_rows is not None and len(extra_rows):
        E.append(np.asarray(extra_rows, float))
    Z = _null_space(np.vstack(E), d, eq_tol)
    q = Z.shape[1]
    method = "cdd"
    if q == 0:
        rays_l = np.zeros((0, d))
        lin_l = np.zeros((0, d))
    else:
        B = Z[sign_idx] if sign_idx else np.zeros((0, q))
        if d > MAX_EXACT_DIM:
            warnings.warn("multiplier dimension exceeds exact enumeration limit; rays may be slow", RuntimeWarning)
            method = "cdd-large"
        rays_z, lin_z = extreme_rays(B, q)
        rays_l = _dedupe(_normalize_l1(rays_z @ Z.T)) if rays_z.shape[0] else np.zeros((0, d))
        lin_l = lin_z @ Z.T if lin_z.shape[0] else np.zeros((0, d))
        # clean round-off on exactly-constrained coordinates
        for arr in (rays_l, lin_l):
            arr[np.abs(arr) < 1e-12] = 0.0
            if zero_idx:
                arr[:, zero_idx] = 0.0
    return MultiplierFamily(
        labels=endpoints.labels(),
        A=A,
        sign_idx=sign_idx,
        zero_idx=zero_idx,
        null_basis=Z,
        rays=rays_l,
        lineality=lin_l,
        adjoints=P,
        extra_rows=None if extra_rows is None else np.asarray(extra_rows, float),
        method=method,
    )


def restrict_family(family: MultiplierFamily, sys, M, traj, endpoints, refined: list[int]) -> MultiplierFamily:
    """Same cone with l_i = 0 forced outside ``refined`` (second-order pattern)."""
    active = family.sign_idx
    return solve_multiplier_cone(
        sys, M, traj, endpoints, active=active, refined=refined,
        extra_rows=family.extra_rows, basis=(family.adjoints, family.A),
    )


def free_time_rows(sys: ControlSystem, M: Manifold, traj: Trajectory, adjoints: np.ndarray) -> np.ndarray:
    """Rows (one per node) of H(t) + int_t^T dH/dt for each basis multiplier."""
    hs = hamiltonian_series(sys, M, traj, adjoints)
    return hs.H + tail_integrals(hs.Ht, traj.h)
