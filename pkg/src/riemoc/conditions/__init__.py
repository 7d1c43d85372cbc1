"""Necessary-condition machinery: Hamiltonian calculus, multipliers, first- and second-order checks."""

from .endpoints import EndpointData, LagrangianDerivs, lagrangian_derivs
from .hamiltonian import HamiltonianDerivs, hamiltonian_derivs, hamiltonian_series
from .multipliers import (
    MultiplierFamily,
    active_set,
    basis_adjoints,
    extreme_rays,
    free_time_rows,
    restrict_family,
    solve_multiplier_cone,
)
from .first_order import FirstOrderProfile, SingularReport, adjoint_for, check_first_order, verify_singular_direction
from .second_order import (
    SecondOrderBreakdown,
    SecondOrderContext,
    free_time_second_order_lhs,
    second_order_lhs,
    second_order_sets,
    second_order_sup,
)
from .free_time import free_time_first_order_residual, reparameterize_from_unit, reparameterize_to_unit
from .certify import Certificate, certify_not_weak_pareto
