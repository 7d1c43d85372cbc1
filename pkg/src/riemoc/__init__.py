"""Numerical first- and second-order necessary conditions for multi-objective
optimal control on flat and two-dimensional graph manifolds."""

__version__ = "0.1.0"
