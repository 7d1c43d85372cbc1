"""Problem data for one candidate: manifold, dynamics, control set, endpoints, control."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cones import ConvexSet
from .conditions.endpoints import EndpointData
from .dynamics import ControlSystem, Trajectory, integrate_state
from .geometry import Manifold

__all__ = ["Problem", "Admissibility", "default_steps", "check_admissibility"]

STEPS_PER_UNIT_TIME = 2000


def default_steps(T: float, per_unit: int = STEPS_PER_UNIT_TIME) -> int:
    N = int(round(per_unit * T))
    N += N % 2
    return max(2, N)


@dataclass
class Problem:
    manifold: Manifold
    system: ControlSystem
    control_set: ConvexSet
    endpoints: EndpointData
    x0: np.ndarray
    control: object  # constant vector, (N+1, m) array, or callable t -> u
    T: float
    horizon: str = "fixed"
    steps: int | None = None
    _traj: Trajectory | None = field(default=None, repr=False)

    @property
    def N(self) -> int:
        return self.steps if self.steps is not None else default_steps(self.T)

    def candidate(self) -> Trajectory:
        if self._traj is None:
            self._traj = integrate_state(self.system, self.manifold, self.x0, self.control, self.T, self.N)
            self._traj.horizon = self.horizon
        return self._traj


@dataclass
class Admissibility:
    control_ok: bool
    first_bad_node: int | None
    phi_values: np.ndarray
    psi_values: np.ndarray
    tol: float

    @property
    def ok(self) -> bool:
        return (
            self.control_ok
            and bool(np.all(self.phi_values <= self.tol))
            and bool(np.all(np.abs(self.psi_values) <= self.tol))
        )


def check_admissibility(problem: Problem, traj: Trajectory | None = None, tol: float = 1e-7) -> Admissibility:
    traj = problem.candidate() if traj is None else traj
    bad = None
    for i, u in enumerate(traj.controls):
        if not problem.control_set.contains(u, 1e-9):
            bad = i
            break
    ep = problem.endpoints
    vals = ep.jet(traj.states[0], traj.states[-1], traj.T).values
    return Admissibility(
        control_ok=bad is None,
        first_bad_node=bad,
        phi_values=vals[ep.r : ep.r + ep.j],
        psi_values=vals[ep.r + ep.j :],
        tol=tol,
    )
