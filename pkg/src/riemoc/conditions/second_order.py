"""Second-order functional along a singular direction, fixed and free horizon.

Every term is linear in the multiplier l because p^l is. The evaluator
therefore computes each term once per basis multiplier and combines the
results, which makes sweeping thousands of multipliers cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from ..cones import ConvexSet, ShiftedConeRepr, second_order_set, sup_linear_nodes
from ..dynamics import ControlSystem, Trajectory, grid_function
from ..geometry import Manifold, metric_tensor, sectional_curvature_at
from ..numerics import running_trapezoid, simpson_weights
from .endpoints import EndpointData, component_second_forms
from .hamiltonian import hamiltonian_series
from .multipliers import basis_adjoints

__all__ = [
    "SecondOrderBreakdown",
    "SecondOrderContext",
    "second_order_sets",
    "second_order_lhs",
    "second_order_sup",
    "free_time_second_order_lhs",
]

TERM_NAMES = (
    "sigma",
    "hess_x",
    "mixed_ux",
    "hess_u",
    "curvature",
    "endpoint",
    "ft_tt",
    "ft_tx",
    "ft_xi_t",
    "ft_tu",
    "ft_xi_x",
    "ft_xi_u",
)


@dataclass(frozen=True)
class SecondOrderBreakdown:
    """Integrals of each term of the second-order functional.

    ``sigma`` is the 2 dH/du(sigma) integral; ``curvature`` is the integral of
    -R(p~, X, f, X); ``endpoint`` is D^2 L_l(X). The ``ft_*`` fields hold the
    free-horizon extras and vanish for fixed-horizon evaluations.
    """

    sigma: float = 0.0
    hess_x: float = 0.0
    mixed_ux: float = 0.0
    hess_u: float = 0.0
    curvature: float = 0.0
    endpoint: float = 0.0
    ft_tt: float = 0.0
    ft_tx: float = 0.0
    ft_xi_t: float = 0.0
    ft_tu: float = 0.0
    ft_xi_x: float = 0.0
    ft_xi_u: float = 0.0
    sup: float | None = None

    @property
    def total(self) -> float:
        return float(sum(getattr(self, k) for k in TERM_NAMES))

    @property
    def sup_finite(self) -> bool | None:
        return None if self.sup is None else math.isfinite(self.sup)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in TERM_NAMES}
        out["total"] = self.total
        if self.sup is not None:
            out["sup"] = self.sup
        return out


class SecondOrderContext:
    """Precomputed per-basis integrals for one candidate and one direction.

    ``X`` must be the matching first variation (fixed or free horizon). With
    ``xi`` given the free-horizon extras are included and ``T_bar`` defaults
    to the trajectory horizon.
    """

    def __init__(
        self,
        sys: ControlSystem,
        M: Manifold,
        traj: Trajectory,
        endpoints: EndpointData,
        v,
        X: np.ndarray,
        xi=None,
        T_bar: float | None = None,
        adjoints: np.ndarray | None = None,
    ):
        if not M.is_flat and M.dim != 2:
            raise ValueError("second-order evaluation supports flat or two-dimensional manifolds")
        self.sys, self.M, self.traj, self.endpoints = sys, M, traj, endpoints
        self.v = grid_function(v, traj.times, sys.m)
        self.X = np.asarray(X, float)
        P = basis_adjoints(sys, M, traj, endpoints)[0] if adjoints is None else adjoints
        self.P = P
        d = endpoints.dim
        hs = hamiltonian_series(sys, M, traj, P)  # trailing axis d
        w = simpson_weights(traj.N, traj.h)
        self.weights = w
        X, v = self.X, self.v
        f = traj.velocities
        # node-wise integrands per basis, shape (N+1, d)
        hess_x = np.einsum("ta,tabD,tb->tD", X, hs.Hxx, X)
        mixed = 2.0 * np.einsum("ta,tacD,tc->tD", X, hs.Hxu, v)
        hess_u = np.einsum("tc,tcdD,td->tD", v, hs.Huu, v)
        G = metric_tensor(M, traj.states)
        K = np.asarray(sectional_curvature_at(M, traj.states)) * np.ones(traj.N + 1)
        xx = np.einsum("ta,tab,tb->t", X, G, X)
        fx = np.einsum("ta,tab,tb->t", f, G, X)
        cvec = K[:, None] * (xx[:, None] * f - fx[:, None] * X)  # -R(p~,X,f,X) = p . cvec
        curv = np.einsum("tkD,tk->tD", P, cvec)
        self.curvature_series = K
        self.Hu = hs.Hu  # (N+1, m, d)
        per = {
            "hess_x": w @ hess_x,
            "mixed_ux": w @ mixed,
            "hess_u": w @ hess_u,
            "curvature": w @ curv,
        }
        self.integrands = {"hess_x": hess_x, "mixed_ux": mixed, "hess_u": hess_u, "curvature": curv}
        _, _, _, H11, H12, H22 = component_second_forms(endpoints, M, traj.states[0], traj.states[-1], traj.T)
        X0, XT = X[0], X[-1]
        per["endpoint"] = (
            np.einsum("a,cab,b->c", X0, H11, X0)
            + 2.0 * np.einsum("a,cab,b->c", X0, H12, XT)
            + np.einsum("a,cab,b->c", XT, H22, XT)
        )
        self.free_time = xi is not None
        if self.free_time:
            T_bar = traj.T if T_bar is None else float(T_bar)
            xi_n = grid_function(xi, traj.times, 1)[:, 0]
            I_n, _ = running_trapezoid(xi_n, traj.h)
            tau = I_n / T_bar
            ints = {
                "ft_tt": hs.Htt * tau[:, None] ** 2,
                "ft_tx": 2.0 * tau[:, None] * np.einsum("taD,ta->tD", hs.Htx, X),
                "ft_xi_t": (2.0 / T_bar) * (tau * xi_n)[:, None] * hs.Ht,
                "ft_tu": 2.0 * tau[:, None] * np.einsum("tcD,tc->tD", hs.Htu, v),
                "ft_xi_x": (2.0 / T_bar) * xi_n[:, None] * np.einsum("taD,ta->tD", hs.Hx, X),
                "ft_xi_u": (2.0 / T_bar) * xi_n[:, None] * np.einsum("tcD,tc->tD", hs.Hu, v),
            }
            self.integrands.update(ints)
            for k, val in ints.items():
                per[k] = w @ val
        self.per_basis = {k: np.asarray(val, float).reshape(d) for k, val in per.items()}

    # ------------------------------------------------------------------

    def sigma_term_basis(self, sigma) -> np.ndarray:
        s = grid_function(sigma, self.traj.times, self.sys.m)
        return self.weights @ (2.0 * np.einsum("tcD,tc->tD", self.Hu, s))

    def breakdown(self, ell, sigma=None) -> SecondOrderBreakdown:
        ell = np.asarray(ell, float)
        vals = {k: float(v @ ell) for k, v in self.per_basis.items()}
        if sigma is not None:
            vals["sigma"] = float(self.sigma_term_basis(sigma) @ ell)
        return SecondOrderBreakdown(**vals)

    def fixed_part(self, ells: np.ndarray) -> np.ndarray:
        """sigma-independent total for a stack of multipliers (K, d)."""
        tot = sum(self.per_basis.values())
        return np.asarray(ells, float) @ tot

    def sigma_sup(self, ells: np.ndarray, sets: list[ShiftedConeRepr], chunk: int = 256) -> np.ndarray:
        """sup over sigma(t) in sets[t] of the integral of 2 dH/du(sigma), per multiplier."""
        ells = np.atleast_2d(np.asarray(ells, float))
        out = np.empty(ells.shape[0])
        for s in range(0, ells.shape[0], chunk):
            E = ells[s : s + chunk]
            C = 2.0 * np.einsum("tcD,KD->Ktc", self.Hu, E)
            node = sup_linear_nodes(sets, C)
            with np.errstate(invalid="ignore"):
                out[s : s + chunk] = node @ self.weights
        return out

    def sup(self, ells: np.ndarray, sets: list[ShiftedConeRepr]) -> np.ndarray:
        return self.fixed_part(ells) + self.sigma_sup(ells, sets)


def second_order_sets(U: ConvexSet, traj: Trajectory, v) -> list[ShiftedConeRepr]:
    """Second-order adjacent set at every node (cached by identical inputs)."""
    v_n = grid_function(v, traj.times, traj.controls.shape[1])
    cache: dict[bytes, ShiftedConeRepr] = {}
    out = []
    for u, vi in zip(traj.controls, v_n):
        key = u.tobytes() + vi.tobytes()
        if key not in cache:
            cache[key] = second_order_set(U, u, vi)
        out.append(cache[key])
    return out


def second_order_lhs(
    sys: ControlSystem,
    M: Manifold,
    traj: Trajectory,
    endpoints: EndpointData,
    ell,
    v,
    X: np.ndarray,
    sigma,
) -> SecondOrderBreakdown:
    """Fixed-horizon second-order functional at multiplier ``ell`` and correction ``sigma``."""
    return SecondOrderContext(sys, M, traj, endpoints, v, X).breakdown(ell, sigma)


def second_order_sup(
    sys: ControlSystem,
    M: Manifold,
    traj: Trajectory,
    endpoints: EndpointData,
    ell,
    v,
    X: np.ndarray,
    sets: list[ShiftedConeRepr],
    xi=None,
) -> SecondOrderBreakdown:
    """Breakdown at sigma = 0 with ``sup`` set to the supremum over admissible sigma."""
    ctx = SecondOrderContext(sys, M, traj, endpoints, v, X, xi=xi)
    b = ctx.breakdown(ell)
    s = float(ctx.sup(np.asarray(ell, float)[None], sets)[0])
    return SecondOrderBreakdown(**{**{f.name: getattr(b, f.name) for f in fields(b)}, "sup": s})


def free_time_second_order_lhs(
    sys: ControlSystem,
    M: Manifold,
    traj: Trajectory,
    endpoints: EndpointData,
    ell,
    xi,
    v,
    X: np.ndarray,
    sigma,
    T_bar: float | None = None,
) -> SecondOrderBreakdown:
    """Free-horizon second-order functional (fixed-horizon terms plus extras)."""
    return SecondOrderContext(sys, M, traj, endpoints, v, X, xi=xi, T_bar=T_bar).breakdown(ell, sigma)
