"""Shared builders and frozen oracle values for the test suite."""

import numpy as np

from riemoc.cones import ConvexSet
from riemoc.conditions import EndpointData
from riemoc.dynamics import (
    ControlSystem,
    flow_perturbed,
    integrate_first_variation,
    integrate_second_variation,
    integrate_state,
)
from riemoc.geometry import Manifold, build_parallel_frame, log_map
from riemoc.problem import Problem
from riemoc.scenario import builtin_scenario

# int_0^T ln(1+s^2)^2 ds, evaluated with 30-digit adaptive quadrature (mpmath.quad)
X1_ORACLE = {0.5: 0.00530183052325288219, 1.0: 0.115988788397161910856, 2.0: 1.55357169446346044380}

HEIGHT = "ln(1+x1^2+x2^2)"
EXAMPLE_F = ["u2*ln(1+x1^2+x2^2)^2", "-x1^2+4*x1*u2-u1"]

# Expressions exercised by the derivative/FD property: everything the example
# scenario uses plus a spread covering every operator and function.
CORPUS = [
    HEIGHT,
    *EXAMPLE_F,
    "-b1^2",
    "-ln(1+b1^2+b2^2)",
    "b1^3+b2+T",
    "x1^2 + ln(1+x2^2)",
    "exp(-x1*x2) * sin(u1)",
    "cos(x1 + 2*x2)^3 - x1/(2 + x2^2)",
    "sqrt(1 + x1^2 + u2^2)",
    "(x1 - u1)^4 / (1 + t^2)",
    "x1^-2 + 3",
    "t*x1*x2*u1*u2",
    "ln(2 + sin(x1)) * exp(cos(u2))",
    "-(-x1)^2 + +x2",
    "2^3 * x1 - 1e-3*x2 + 4.5E+1",
    "sqrt(exp(x1)) - x2^(1+1)",
    "1/(1 + x1^2)^2 - u1*u2/(3 + cos(t))",
]


def example_at(T: float, steps: int | None = None):
    if steps is None:
        steps = int(round(2000 * T))
        steps += steps % 2
    return builtin_scenario("example-exg", T=T, steps=steps)


def curvature_closed_form(t):
    t = np.asarray(t, float)
    return 4 * (1 - t**4) / (1 + 6 * t**2 + t**4) ** 2


def flat_problem(f, n, m, U, phi0, phi=(), psi=(), x0=None, u=0.0, T=1.0, steps=200, horizon="fixed"):
    sys_ = ControlSystem.from_strings(f, n, m)
    ep = EndpointData.from_strings(n, phi0, phi, psi)
    x0 = np.zeros(n) if x0 is None else np.asarray(x0, float)
    return Problem(Manifold.flat(n), sys_, U, ep, x0, u, T, horizon=horizon, steps=steps)


def time_dependent_scalar(steps=2000):
    """x' = u - t on R, U = [-1, 1], u = 1, x(0) free, cost -x(T), psi = x(0)."""
    return flat_problem(["u1 - t"], 1, 1, ConvexSet.box([-1], [1]), ["-b1"], psi=["a1"], u=1.0,
                        T=1.0, steps=steps, horizon="free")


def taylor_ratios(M, sys_, x0, u, v, sigma, X0, W, T=1.0, N=2000, eps=(1e-2, 1e-3)):
    """Remainder ratios err(eps)/err(eps/10) of the first and second variations.

    The second-order remainder is measured through the log map in the
    parallel frame at x(T).
    """
    tr = integrate_state(sys_, M, x0, u, T, N)
    fr = build_parallel_frame(M, tr.times, tr.states, tr.velocities)
    X = integrate_first_variation(sys_, M, tr, v, X0)
    Y = integrate_second_variation(sys_, M, tr, fr, X, v, sigma, W)
    e1, e2 = [], []
    for e in eps:
        pt = flow_perturbed(sys_, M, x0, u, T, N, e, v, sigma, X0, W)
        e1.append(np.linalg.norm(pt.states[-1] - tr.states[-1] - e * X[-1]))
        L = fr.D[-1] @ log_map(M, tr.states[-1], pt.states[-1])
        e2.append(np.linalg.norm(L - e * (fr.D[-1] @ X[-1]) - e**2 * Y[-1]))
    return e1[0] / e1[1], e2[0] / e2[1]
