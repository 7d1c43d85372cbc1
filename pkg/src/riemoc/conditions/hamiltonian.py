"""Hamiltonian H = p(f) and its partial / covariant derivatives."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import ControlSystem, Trajectory
from ..geometry import Manifold, christoffel_at

__all__ = ["HamiltonianDerivs", "hamiltonian_derivs", "hamiltonian_series"]


@dataclass(frozen=True)
class HamiltonianDerivs:
    """Derivatives of H at one point or stacked over grid nodes (leading axis).

    ``Hxx`` is the covariant Hessian d2H/dxi2 - Gamma^e_{li} dH/dxi_e. Mixed
    derivatives with u or t are plain partials: the connection acts on the
    state slot only, and dH/dxi is already a covector.
    """

    H: np.ndarray
    Hx: np.ndarray
    Hu: np.ndarray
    Hxx: np.ndarray
    Huu: np.ndarray
    Hxu: np.ndarray
    Ht: np.ndarray
    Htt: np.ndarray
    Htx: np.ndarray
    Htu: np.ndarray


_GROUPS = ("f", "fx", "fu", "fxx", "fuu", "fxu", "ft", "ftt", "ftx", "ftu")


def _assemble(M: Manifold, x, p, g) -> HamiltonianDerivs:
    Hx = np.einsum("...k,...ka->...a", p, g["fx"])
    Gam = christoffel_at(M, x)
    return HamiltonianDerivs(
        H=np.einsum("...k,...k->...", p, g["f"]),
        Hx=Hx,
        Hu=np.einsum("...k,...kc->...c", p, g["fu"]),
        Hxx=np.einsum("...k,...kab->...ab", p, g["fxx"]) - np.einsum("...eli,...e->...il", Gam, Hx),
        Huu=np.einsum("...k,...kcd->...cd", p, g["fuu"]),
        Hxu=np.einsum("...k,...kac->...ac", p, g["fxu"]),
        Ht=np.einsum("...k,...k->...", p, g["ft"]),
        Htt=np.einsum("...k,...k->...", p, g["ftt"]),
        Htx=np.einsum("...k,...ka->...a", p, g["ftx"]),
        Htu=np.einsum("...k,...kc->...c", p, g["ftu"]),
    )


def hamiltonian_derivs(sys: ControlSystem, M: Manifold, t: float, q, p, u) -> HamiltonianDerivs:
    """Derivative bundle of H at a single point (t, q, p, u)."""
    q = np.asarray(q, float)
    p = np.asarray(p, float)
    g = {name: sys.eval(name, [t], q[None], np.asarray(u, float)[None])[0] for name in _GROUPS}
    return _assemble(M, q, p, g)


def hamiltonian_series(sys: ControlSystem, M: Manifold, traj: Trajectory, p: np.ndarray) -> HamiltonianDerivs:
    """Derivative bundle at every grid node for adjoint samples ``p`` of shape (N+1, n).

    ``p`` may carry a trailing batch axis ``(N+1, n, B)``, in which case every
    field gets a trailing batch axis as well.
    """
    g = {name: traj.coefficients(sys, name)[0] for name in _GROUPS}
    if p.ndim == 3:
        parts = [_assemble(M, traj.states, p[..., b], g) for b in range(p.shape[-1])]
        return HamiltonianDerivs(
            **{k: np.stack([getattr(x, k) for x in parts], axis=-1) for k in HamiltonianDerivs.__dataclass_fields__}
        )
    return _assemble(M, traj.states, p, g)
