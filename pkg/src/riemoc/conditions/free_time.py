"""Free-horizon helpers: time rescaling and the Hamiltonian transversality residual."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import ControlSystem, Trajectory
from ..geometry import Manifold
from ..numerics import tail_integrals
from .hamiltonian import hamiltonian_series

__all__ = ["reparameterize_to_unit", "reparameterize_from_unit", "FreeTimeResidual", "free_time_first_order_residual"]


def reparameterize_to_unit(traj: Trajectory) -> Trajectory:
    """Rescale a trajectory on [0, T] to s in [0, 1]: y(s) = x(T s), w(s) = u(T s).

    The scale factor v = T becomes a constant extra control of the augmented
    system dy/ds = T f(T s, y, w); it is stored as ``velocities`` = T f.
    """
    T = traj.T
    if T <= 0:
        raise ValueError("horizon must be positive")
    return Trajectory(
        times=traj.times / T,
        states=traj.states.copy(),
        controls=traj.controls.copy(),
        velocities=traj.velocities * T,
        horizon="unit",
        _cache={"scale": T},
    )


def reparameterize_from_unit(unit: Trajectory, T: float) -> Trajectory:
    """Inverse of :func:`reparameterize_to_unit`."""
    return Trajectory(
        times=unit.times * T,
        states=unit.states.copy(),
        controls=unit.controls.copy(),
        velocities=unit.velocities / T,
        horizon="free",
    )


@dataclass
class FreeTimeResidual:
    profile: np.ndarray  # H(t) + int_t^T dH/dt, node-wise

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.profile)))


def free_time_first_order_residual(sys: ControlSystem, M: Manifold, traj: Trajectory, p: np.ndarray) -> FreeTimeResidual:
    """Residual of H(t) + int_t^T dH/dt = 0 along the grid for adjoint samples ``p``."""
    hs = hamiltonian_series(sys, M, traj, np.asarray(p, float))
    return FreeTimeResidual(profile=hs.H + tail_integrals(hs.Ht, traj.h))
