import math

import numpy as np
import pytest

from riemoc.cones import ConvexSet
from riemoc.conditions import certify_not_weak_pareto

from helpers import X1_ORACLE, flat_problem, time_dependent_scalar


@pytest.fixture(scope="module")
def cert(example):
    return certify_not_weak_pareto(example.problem, example.v, samples=2000, seed=0)


def test_example_is_certified(cert):
    assert cert.verdict == "certified-not-weak-pareto" and cert.certified
    assert cert.margin > 1e-6
    # the minimum sits on the l_phi = 0 face of the cross-section
    assert cert.margin == pytest.approx(0.5 * X1_ORACLE[1.0] ** 2, rel=1e-2)
    assert cert.margin >= 0.5 * X1_ORACLE[1.0] ** 2 - 1e-9
    assert cert.samples == 2000


def test_example_ray_table(cert):
    by_ray = {tuple(np.round(r.ell, 6)): r for r in cert.rays}
    a = by_ray[(-1.0, 0.0, 0.0, 0.0, 0.0)]
    assert a.sup == pytest.approx(2 * X1_ORACLE[1.0] ** 2, rel=1e-6) and a.first_order_violation == 0.0
    b = by_ray[(0.0, -0.5, 0.0, 0.0, 0.5)]
    assert b.sup == pytest.approx(0.5 * X1_ORACLE[1.0] ** 2, rel=1e-6)
    c = by_ray[(0.0, 0.0, -0.5, 0.0, 0.5)]
    assert c.sup == math.inf and not c.finite
    assert c.first_order_violation == pytest.approx(0.5, abs=1e-12)
    assert max(r.degeneracy for r in cert.rays) <= 1e-9


def test_example_is_deterministic(example, cert):
    again = certify_not_weak_pareto(example.problem, example.v, samples=2000, seed=0)
    assert again.margin == cert.margin and np.array_equal(again.argmin, cert.argmin)


def test_strict_minimizer_is_inconclusive():
    # x' = u, minimise x(T)^2 from a free start: u = 0 is the unique minimiser
    pr = flat_problem(["u1"], 1, 1, ConvexSet.box([-1], [1]), ["b1^2"], u=0.0, T=1.0)
    c = certify_not_weak_pareto(pr, 1.0, samples=50)
    assert c.verdict == "inconclusive" and not c.certified
    assert c.margin <= 0.0
    assert c.margin == pytest.approx(-2.0, abs=1e-9)


def test_empty_family_is_infeasible_first_order():
    pr = flat_problem(["u1"], 1, 1, ConvexSet.box([-1], [1]), ["b1"], u=0.5)
    c = certify_not_weak_pareto(pr, 0.0)
    assert c.verdict == "infeasible-first-order" and c.certified and c.family.empty


def test_inadmissible_candidate():
    pr = flat_problem(["u1"], 1, 1, ConvexSet.box([-1], [1]), ["b1"], u=2.0)
    c = certify_not_weak_pareto(pr, 0.0)
    assert c.verdict == "admissibility-failed" and not c.admissibility.ok


def test_non_singular_direction_is_inconclusive(example):
    c = certify_not_weak_pareto(example.problem, [-1.0, 0.0], samples=100)
    assert c.verdict == "inconclusive" and c.margin is None
    assert not c.singular.singular


def test_free_horizon_certificate_reports_residual():
    c = certify_not_weak_pareto(time_dependent_scalar(), 0.0, xi=0.0, samples=50)
    # the zero direction carries no second-order information
    assert c.verdict == "inconclusive" and c.margin == pytest.approx(0.0, abs=1e-12)
    assert c.free_time_residual is not None and c.free_time_residual <= 1e-7
