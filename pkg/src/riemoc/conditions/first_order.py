"""First-order maximum-principle checks and singular-direction verification."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cones import ConvexSet, adjacent_cone, second_order_distance_ratio, support_over_cone
from ..dynamics import (
    ControlSystem,
    Trajectory,
    grid_function,
    integrate_adjoint,
    integrate_first_variation,
    integrate_first_variation_free_time,
)
from ..geometry import Manifold
from .endpoints import EndpointData
from .hamiltonian import hamiltonian_series
from .multipliers import MultiplierFamily, active_set

__all__ = [
    "FirstOrderProfile",
    "SingularReport",
    "adjoint_for",
    "check_first_order",
    "verify_singular_direction",
]

FIRST_ORDER_TOL = 1e-7
SINGULAR_TOL = 1e-7


def adjoint_for(sys: ControlSystem, M: Manifold, traj: Trajectory, endpoints: EndpointData, ell) -> np.ndarray:
    """p^l on the grid from its terminal value d2 L_l."""
    n = endpoints.n
    J = endpoints.jet(traj.states[0], traj.states[-1], traj.T)
    return integrate_adjoint(sys, M, traj, np.asarray(ell, float) @ J.grad[:, n:])


@dataclass
class FirstOrderProfile:
    """Node-wise sup of dH/du over the adjacent cone intersected with the unit ball."""

    values: np.ndarray
    methods: list[str]
    tol: float

    @property
    def max_violation(self) -> float:
        return float(np.max(self.values))

    @property
    def passes(self) -> bool:
        return self.max_violation <= self.tol


def check_first_order(
    sys: ControlSystem,
    M: Manifold,
    traj: Trajectory,
    ell,
    U: ConvexSet,
    endpoints: EndpointData | None = None,
    p: np.ndarray | None = None,
    tol: float = FIRST_ORDER_TOL,
) -> FirstOrderProfile:
    """Check dH/du (v) <= 0 for every v in the adjacent cone at every node.

    Either ``p`` (adjoint samples) or ``endpoints`` (to build p from l) is needed.
    """
    if p is None:
        if endpoints is None:
            raise ValueError("need the adjoint or the endpoint data")
        p = adjoint_for(sys, M, traj, endpoints, ell)
    Hu = hamiltonian_series(sys, M, traj, p).Hu
    vals, methods = np.empty(traj.N + 1), []
    cone_cache: dict[bytes, object] = {}
    for i, u in enumerate(traj.controls):
        key = u.tobytes()
        if key not in cone_cache:
            cone_cache[key] = adjacent_cone(U, u)
        vals[i], m = support_over_cone(cone_cache[key], Hu[i])
        methods.append(m)
    return FirstOrderProfile(values=vals, methods=methods, tol=tol)


@dataclass
class SingularReport:
    X: np.ndarray
    cone_ok: bool
    first_bad_node: int | None
    active: list[int]
    endpoint_terms: dict[int, float]
    psi_terms: np.ndarray
    inequalities_ok: bool
    equalities_ok: bool
    refined: list[int]
    degeneracy: np.ndarray = field(default_factory=lambda: np.zeros(0))
    distance_ratio: float = 0.0
    tol: float = SINGULAR_TOL

    @property
    def singular(self) -> bool:
        return self.cone_ok and self.inequalities_ok and self.equalities_ok

    @property
    def max_degeneracy(self) -> float:
        return float(np.max(self.degeneracy)) if self.degeneracy.size else 0.0


def verify_singular_direction(
    sys: ControlSystem,
    M: Manifold,
    traj: Trajectory,
    U: ConvexSet,
    endpoints: EndpointData,
    v,
    X0=None,
    family: MultiplierFamily | None = None,
    xi=None,
    T_bar: float | None = None,
    tol: float = SINGULAR_TOL,
) -> SingularReport:
    """Integrate the first variation for ``v`` (and ``xi`` in the free-time case)
    and check every requirement of a singular direction.

    ``degeneracy[k]`` is max_t |dH/du . v| for the k-th generator of ``family``.
    """
    n = endpoints.n
    v_n = grid_function(v, traj.times, sys.m)
    bad = None
    ratio = 0.0
    for i, (u, vi) in enumerate(zip(traj.controls, v_n)):
        if not adjacent_cone(U, u).contains(vi, tol):
            bad = i
            break
    if bad is None:
        ratio = max(second_order_distance_ratio(U, u, vi) for u, vi in zip(traj.controls[:: max(1, traj.N // 50)], v_n[:: max(1, traj.N // 50)]))
    if xi is None:
        X = integrate_first_variation(sys, M, traj, v_n, X0)
    else:
        X = integrate_first_variation_free_time(sys, M, traj, xi, v_n, X0, T_bar)
    J = endpoints.jet(traj.states[0], traj.states[-1], traj.T)
    lin = J.grad[:, :n] @ X[0] + J.grad[:, n:] @ X[-1]
    active = active_set(endpoints, traj.states[0], traj.states[-1], traj.T)
    r, j = endpoints.r, endpoints.j
    terms = {i: float(lin[i]) for i in active}
    psi_terms = lin[r + j :]
    ineq_ok = all(val <= tol for val in terms.values())
    eq_ok = bool(np.all(np.abs(psi_terms) <= tol))
    refined = [i for i in active if abs(terms[i]) <= tol]
    degeneracy = np.zeros(0)
    if family is not None and not family.empty:
        gens = family.generators()
        P = family.adjoints @ gens.T  # (N+1, n, K)
        Hu = hamiltonian_series(sys, M, traj, P).Hu  # (N+1, m, K)
        degeneracy = np.max(np.abs(np.einsum("tcK,tc->tK", Hu, v_n)), axis=0)
    return SingularReport(
        X=X,
        cone_ok=bad is None,
        first_bad_node=bad,
        active=active,
        endpoint_terms=terms,
        psi_terms=psi_terms,
        inequalities_ok=ineq_ok,
        equalities_ok=eq_ok,
        refined=refined,
        degeneracy=degeneracy,
        distance_ratio=float(ratio),
        tol=tol,
    )
