"""Numerical certificate that a candidate fails the second-order necessary conditions.

If the candidate were weakly Pareto optimal, some multiplier l (with the
refined zero pattern) would make sup over sigma of the second-order
functional <= 0. The certificate evaluates that supremum on every extreme
ray and on a dense deterministic sample of the normalised cone cross-section;
a strictly positive minimum (or +inf everywhere) rules the candidate out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from ..dynamics import Trajectory, grid_function
from .first_order import SingularReport, check_first_order, verify_singular_direction
from .free_time import free_time_first_order_residual
from .multipliers import MultiplierFamily, basis_adjoints, free_time_rows, restrict_family, solve_multiplier_cone
from .second_order import SecondOrderContext, second_order_sets

if TYPE_CHECKING:
    from ..problem import Admissibility, Problem

__all__ = ["RayResult", "Certificate", "certify_not_weak_pareto", "VERDICTS"]

VERDICTS = ("certified-not-weak-pareto", "inconclusive", "infeasible-first-order", "admissibility-failed")


@dataclass
class RayResult:
    ell: np.ndarray
    sup: float
    fixed_part: float
    first_order_violation: float
    degeneracy: float

    @property
    def finite(self) -> bool:
        return math.isfinite(self.sup)


@dataclass
class Certificate:
    verdict: str
    reason: str
    margin: float | None = None
    argmin: np.ndarray | None = None
    rays: list[RayResult] = field(default_factory=list)
    samples: int = 0
    family: MultiplierFamily | None = None
    restricted: MultiplierFamily | None = None
    singular: SingularReport | None = None
    admissibility: Admissibility | None = None
    context: SecondOrderContext | None = None
    trajectory: Trajectory | None = None
    free_time_residual: float | None = None

    @property
    def certified(self) -> bool:
        return self.verdict in ("certified-not-weak-pareto", "infeasible-first-order")


def certify_not_weak_pareto(
    problem: Problem,
    v,
    xi=None,
    X0=None,
    samples: int = 10_000,
    seed: int = 0,
    margin_tol: float = 1e-6,
    first_order_tol: float = 1e-7,
    singular_tol: float = 1e-7,
) -> Certificate:
    from ..problem import check_admissibility

    sys, M, U, ep = problem.system, problem.manifold, problem.control_set, problem.endpoints
    traj = problem.candidate()
    adm = check_admissibility(problem, traj)
    if not adm.ok:
        return Certificate("admissibility-failed", "candidate violates the control set or endpoint constraints",
                           admissibility=adm, trajectory=traj)
    free = problem.horizon == "free"
    if free and xi is None:
        xi = 0.0
    basis = basis_adjoints(sys, M, traj, ep)
    extra = free_time_rows(sys, M, traj, basis[0]) if free else None
    family = solve_multiplier_cone(sys, M, traj, ep, extra_rows=extra, basis=basis)
    if family.empty:
        return Certificate("infeasible-first-order", "no multiplier satisfies transversality and sign conditions",
                           family=family, admissibility=adm, trajectory=traj)
    rep = verify_singular_direction(sys, M, traj, U, ep, v, X0=X0, family=family, xi=xi, T_bar=traj.T if free else None,
                                    tol=singular_tol)
    if not rep.singular:
        return Certificate("inconclusive", "direction is not singular", family=family, singular=rep,
                           admissibility=adm, trajectory=traj)
    restricted = restrict_family(family, sys, M, traj, ep, rep.refined)
    if restricted.empty:
        return Certificate("infeasible-first-order", "no multiplier has the refined zero pattern",
                           family=family, restricted=restricted, singular=rep, admissibility=adm, trajectory=traj)
    ctx = SecondOrderContext(sys, M, traj, ep, v, rep.X, xi=xi if free else None, adjoints=family.adjoints)
    sets = second_order_sets(U, traj, v)
    gens = restricted.generators()
    ray_sup = ctx.sup(gens, sets)
    ray_fixed = ctx.fixed_part(gens)
    v_n = grid_function(v, traj.times, sys.m)
    rows = []
    for k, ell in enumerate(gens):
        p = restricted.adjoint(ell)
        fo = check_first_order(sys, M, traj, ell, U, p=p, tol=first_order_tol)
        Hu = np.einsum("tcD,D->tc", ctx.Hu, ell)
        rows.append(RayResult(ell=ell, sup=float(ray_sup[k]), fixed_part=float(ray_fixed[k]),
                              first_order_violation=fo.max_violation,
                              degeneracy=float(np.max(np.abs(np.sum(Hu * v_n, axis=1))))))
    pts = restricted.sample_cross_section(samples, seed)
    vals = ctx.sup(pts, sets)
    i = int(np.argmin(vals))
    margin = float(vals[i])
    ft = None
    if free:
        ft = max(free_time_first_order_residual(sys, M, traj, restricted.adjoint(g)).max_abs for g in gens)
    verdict = "certified-not-weak-pareto" if margin > margin_tol else "inconclusive"
    reason = (
        "second-order supremum is positive for every sampled multiplier"
        if verdict.startswith("certified")
        else "some multiplier satisfies the second-order inequality within tolerance"
    )
    return Certificate(verdict, reason, margin=margin, argmin=pts[i], rays=rows, samples=len(pts),
                       family=family, restricted=restricted, singular=rep, admissibility=adm,
                       context=ctx, trajectory=traj, free_time_residual=ft)
