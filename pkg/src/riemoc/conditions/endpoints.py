"""Endpoint maps (objectives phi0, inequalities phi, equalities psi) and the Lagrangian.

Endpoint expressions are written over ``a1..an`` (chart coordinates of x(0)),
``b1..bn`` (chart coordinates of x(T)) and optionally ``T``. The Lagrangian
for a multiplier l is L_l = (phi0, phi, psi) . l.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..exprlang import Expr, compile_exprs, differentiate, parse
from ..geometry import Manifold, christoffel_at

__all__ = ["EndpointData", "EndpointJet", "LagrangianDerivs", "lagrangian_derivs"]


def endpoint_names(n: int) -> list[str]:
    return [f"a{i + 1}" for i in range(n)] + [f"b{i + 1}" for i in range(n)] + ["T"]


class EndpointData:
    def __init__(self, n: int, phi0: Sequence[Expr], phi: Sequence[Expr] = (), psi: Sequence[Expr] = ()):
        self.n = n
        self.phi0, self.phi, self.psi = tuple(phi0), tuple(phi), tuple(psi)
        if not self.phi0:
            raise ValueError("at least one objective component is required")
        self.names = endpoint_names(n)
        allowed = set(self.names)
        for e in self.components:
            extra = e.free_vars() - allowed
            if extra:
                raise ValueError(f"endpoint expression uses undeclared variables {sorted(extra)}")
        self.uses_T = any("T" in e.free_vars() for e in self.components)
        slots = self.names[:-1]
        grads = [differentiate(e, s) for e in self.components for s in slots]
        hess = [differentiate(differentiate(e, s), s2) for e in self.components for s in slots for s2 in slots]
        self._fn = compile_exprs(list(self.components) + grads + hess, self.names, backend="math")

    @classmethod
    def from_strings(cls, n: int, phi0: Sequence[str], phi: Sequence[str] = (), psi: Sequence[str] = ()):
        names = endpoint_names(n)
        return cls(n, [parse(s, names) for s in phi0], [parse(s, names) for s in phi], [parse(s, names) for s in psi])

    @property
    def components(self) -> tuple[Expr, ...]:
        return self.phi0 + self.phi + self.psi

    @property
    def r(self) -> int:
        return len(self.phi0)

    @property
    def j(self) -> int:
        return len(self.phi)

    @property
    def k(self) -> int:
        return len(self.psi)

    @property
    def dim(self) -> int:
        return self.r + self.j + self.k

    def labels(self) -> list[str]:
        return (
            [f"l0_{i + 1}" for i in range(self.r)]
            + [f"lphi_{i + 1}" for i in range(self.j)]
            + [f"lpsi_{i + 1}" for i in range(self.k)]
        )

    def jet(self, q0, qT, T: float) -> "EndpointJet":
        """Values, gradients and Hessians of every component at (x(0), x(T))."""
        n, d = self.n, self.dim
        vals = np.array(self._fn(*map(float, q0), *map(float, qT), float(T)))
        v = vals[:d]
        g = vals[d : d + d * 2 * n].reshape(d, 2 * n)
        H = vals[d + d * 2 * n :].reshape(d, 2 * n, 2 * n)
        return EndpointJet(values=v, grad=g, hess=H)


@dataclass(frozen=True)
class EndpointJet:
    values: np.ndarray  # (d,)
    grad: np.ndarray  # (d, 2n): [d/da | d/db]
    hess: np.ndarray  # (d, 2n, 2n)


@dataclass(frozen=True)
class LagrangianDerivs:
    """Derivatives of L_l. Per-component arrays are kept so everything stays linear in l."""

    L: float
    d1: np.ndarray  # (n,)
    d2: np.ndarray  # (n,)
    hess11: np.ndarray  # covariant, (n, n)
    hess12: np.ndarray  # plain mixed partial
    hess22: np.ndarray  # covariant
    D2: float | None = None

    def second_form(self, X0, XT) -> float:
        X0, XT = np.asarray(X0, float), np.asarray(XT, float)
        return float(X0 @ self.hess11 @ X0 + 2.0 * X0 @ self.hess12 @ XT + XT @ self.hess22 @ XT)


def component_second_forms(endpoints: EndpointData, M: Manifold, q0, qT, T: float):
    """Per-component (d1, d2, covariant H11, H12, covariant H22) arrays."""
    n = endpoints.n
    J = endpoints.jet(q0, qT, T)
    d1, d2 = J.grad[:, :n], J.grad[:, n:]
    G0, GT = christoffel_at(M, q0), christoffel_at(M, qT)
    H11 = J.hess[:, :n, :n] - np.einsum("eli,ce->cil", G0, d1)
    H22 = J.hess[:, n:, n:] - np.einsum("eli,ce->cil", GT, d2)
    H12 = J.hess[:, :n, n:]
    return J, d1, d2, H11, H12, H22


def lagrangian_derivs(endpoints: EndpointData, M: Manifold, ell, q0, qT, T: float = 0.0, X0=None, XT=None) -> LagrangianDerivs:
    """L_l and its derivatives; with X0, XT also D^2 L_l(X).

    D^2 L(X) = nabla_1^2 L(X0, X0) + 2 nabla_2 nabla_1 L(X0, XT) + nabla_2^2 L(XT, XT),
    with Christoffel-corrected Hessians in each slot and the plain mixed
    partial for the cross term.
    """
    ell = np.asarray(ell, float)
    J, d1, d2, H11, H12, H22 = component_second_forms(endpoints, M, q0, qT, T)
    out = LagrangianDerivs(
        L=float(J.values @ ell),
        d1=ell @ d1,
        d2=ell @ d2,
        hess11=np.einsum("c,cij->ij", ell, H11),
        hess12=np.einsum("c,cij->ij", ell, H12),
        hess22=np.einsum("c,cij->ij", ell, H22),
    )
    if X0 is not None or XT is not None:
        X0 = np.zeros(endpoints.n) if X0 is None else X0
        XT = np.zeros(endpoints.n) if XT is None else XT
        out = replace(out, D2=out.second_form(X0, XT))
    return out
