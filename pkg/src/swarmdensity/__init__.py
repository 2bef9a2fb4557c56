"""Optimal boundary actuation of swarm densities.

Finite elements for the density equation, discrete adjoints for exact
reduced gradients, a box-constrained optimizer and a particle simulator.
"""
from .actuation import ActuatorModel, ControlBasis, ControlTrajectory, eval_velocity, velocity_sup_norm
from .assembly import OperatorSet, assemble_operators, project_density
from .mesh import Mesh, build_structured_mesh
from .ocp import CostBreakdown, OptResult, cost, optimize, reduced_gradient
from .solver import (
    AdjointTrajectory,
    SolverError,
    StateTrajectory,
    gamma_p,
    gamma_q,
    solve_adjoint_dto,
    solve_adjoint_otd,
    solve_forward,
    solve_tangent,
)

__version__ = "0.1.0"
