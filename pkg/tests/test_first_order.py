import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from riemoc.cones import ConvexSet
from riemoc.conditions import (
    adjoint_for,
    check_first_order,
    hamiltonian_derivs,
    hamiltonian_series,
    solve_multiplier_cone,
    verify_singular_direction,
)

from helpers import flat_problem


@pytest.fixture(scope="module")
def family(example, example_traj):
    pr = example.problem
    return solve_multiplier_cone(pr.system, pr.manifold, example_traj, pr.endpoints)


def test_adjoint_is_constant_and_matches_transversality(example, example_traj):
    pr = example.problem
    ell = np.array([-0.1, -0.2, -0.3, 0.0, 0.5])
    p = adjoint_for(pr.system, pr.manifold, example_traj, pr.endpoints, ell)
    # p(0) = -d1 L = -(l_psi1, l_phi) and the state equation leaves it unchanged
    assert np.max(np.abs(p - np.array([0.0, 0.3]))) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_hu_on_example_is_lphi_e1(example, example_traj, a, b, c):
    # on the family, p = (-l_psi1, -l_phi) and dH/du = (l_phi, 0)
    pr = example.problem
    ell = np.array([a, b, c, 0.0, -c - b])
    p = adjoint_for(pr.system, pr.manifold, example_traj, pr.endpoints, ell)
    Hu = hamiltonian_series(pr.system, pr.manifold, example_traj, p).Hu
    assert np.max(np.abs(Hu - np.array([c, 0.0]))) <= 1e-12


@pytest.mark.parametrize("lphi", [-1.0, -0.25, 0.0, 0.3])
def test_first_order_sup_equals_negative_part_of_lphi(example, example_traj, lphi):
    pr = example.problem
    ell = np.array([-0.2, -0.5, lphi, 0.0, 0.5 - lphi])
    prof = check_first_order(pr.system, pr.manifold, example_traj, ell, pr.control_set, endpoints=pr.endpoints)
    assert np.allclose(prof.values, max(0.0, -lphi), atol=1e-12)
    assert prof.passes == (lphi >= 0)
    assert set(prof.methods) == {"exact"}


def test_family_rays_first_order(family, example, example_traj):
    pr = example.problem
    for ell in family.rays:
        prof = check_first_order(pr.system, pr.manifold, example_traj, ell, pr.control_set, p=family.adjoint(ell))
        assert prof.max_violation == pytest.approx(max(0.0, -ell[2]), abs=1e-12)


def test_zero_adjoint_gives_zero(example, example_traj):
    pr = example.problem
    p = np.zeros((example_traj.N + 1, 2))
    prof = check_first_order(pr.system, pr.manifold, example_traj, np.zeros(5), pr.control_set, p=p)
    assert prof.max_violation == 0.0 and prof.passes


def test_first_order_needs_adjoint_source(example, example_traj):
    pr = example.problem
    with pytest.raises(ValueError):
        check_first_order(pr.system, pr.manifold, example_traj, np.zeros(5), pr.control_set)


def test_interior_control_needs_vanishing_gradient():
    pr = flat_problem(["u1"], 1, 1, ConvexSet.box([-1], [1]), ["b1"], u=0.5)
    traj = pr.candidate()
    p = np.full((traj.N + 1, 1), -0.7)
    prof = check_first_order(pr.system, pr.manifold, traj, [1.0], pr.control_set, p=p)
    assert np.allclose(prof.values, 0.7) and not prof.passes


# --- Hamiltonian ---------------------------------------------------------------------


def test_hamiltonian_formula(example):
    pr = example.problem
    q, p, u = np.array([0.3, -0.4]), np.array([0.7, -1.1]), np.array([0.6, 0.2])
    d = hamiltonian_derivs(pr.system, pr.manifold, 0.0, q, p, u)
    a = np.log(1 + q @ q)
    f = np.array([u[1] * a**2, -q[0] ** 2 + 4 * q[0] * u[1] - u[0]])
    assert d.H == pytest.approx(p @ f, abs=1e-14)
    assert np.allclose(d.Hu, [-p[1], p[0] * a**2 + 4 * q[0] * p[1]], atol=1e-14)


def test_hamiltonian_gradient_by_finite_differences(example):
    pr = example.problem
    q, p, u = np.array([0.3, -0.4]), np.array([0.7, -1.1]), np.array([0.6, 0.2])
    h = 1e-6
    Hx_fd = [
        (hamiltonian_derivs(pr.system, pr.manifold, 0.0, q + h * e, p, u).H
         - hamiltonian_derivs(pr.system, pr.manifold, 0.0, q - h * e, p, u).H) / (2 * h)
        for e in np.eye(2)
    ]
    d = hamiltonian_derivs(pr.system, pr.manifold, 0.0, q, p, u)
    assert np.allclose(d.Hx, Hx_fd, atol=1e-8)
    Hxx_plain = [
        (hamiltonian_derivs(pr.system, pr.manifold, 0.0, q + h * e, p, u).Hx
         - hamiltonian_derivs(pr.system, pr.manifold, 0.0, q - h * e, p, u).Hx) / (2 * h)
        for e in np.eye(2)
    ]
    # covariant Hessian is symmetric because the connection is torsion free
    assert np.allclose(d.Hxx, d.Hxx.T, atol=1e-12)
    assert not np.allclose(d.Hxx, np.array(Hxx_plain), atol=1e-6)


# --- singular directions -------------------------------------------------------------


def test_example_direction_is_singular(family, example, example_traj):
    pr = example.problem
    rep = verify_singular_direction(pr.system, pr.manifold, example_traj, pr.control_set, pr.endpoints,
                                    example.v, family=family)
    assert rep.singular and rep.cone_ok and rep.first_bad_node is None
    assert rep.active == [0, 1, 2] and rep.refined == [0, 1, 2]
    assert rep.max_degeneracy <= 1e-9
    assert np.max(np.abs(rep.psi_terms)) <= 1e-7
    assert rep.distance_ratio == pytest.approx(0.5, abs=1e-2)


def test_zero_direction_is_trivially_singular(family, example, example_traj):
    pr = example.problem
    rep = verify_singular_direction(pr.system, pr.manifold, example_traj, pr.control_set, pr.endpoints,
                                    [0.0, 0.0], family=family)
    assert rep.singular and np.all(rep.X == 0.0) and rep.max_degeneracy == 0.0


def test_inward_direction_is_flagged(family, example, example_traj):
    pr = example.problem
    rep = verify_singular_direction(pr.system, pr.manifold, example_traj, pr.control_set, pr.endpoints,
                                    [-1.0, 0.0], family=family)
    # stays in the cone, but moves x2(T) and so breaks psi2 = 0
    assert rep.cone_ok and not rep.equalities_ok and not rep.singular
    assert rep.psi_terms[1] == pytest.approx(1.0, abs=1e-9)
    # the l_phi ray sees dH/du . v = -l_phi = 1/2
    assert rep.max_degeneracy == pytest.approx(0.5, abs=1e-12)


def test_outward_direction_leaves_cone(example, example_traj):
    pr = example.problem
    rep = verify_singular_direction(pr.system, pr.manifold, example_traj, pr.control_set, pr.endpoints, [1.0, 0.0])
    assert not rep.cone_ok and rep.first_bad_node == 0 and not rep.singular
