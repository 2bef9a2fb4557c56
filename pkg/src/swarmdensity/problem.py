"""Assemble everything a run needs from a :class:`ProblemConfig`."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actuation import ActuatorModel, ControlBasis, ControlTrajectory
from .assembly import OperatorSet, assemble_operators, project_density
from .config import ConfigError, ProblemConfig
from .mesh import Mesh, build_structured_mesh
from .ocp import OptimizerSettings


@dataclass
class Problem:
    config: ProblemConfig
    mesh: Mesh
    basis: ControlBasis
    model: ActuatorModel
    ops: OperatorSet
    q0: np.ndarray
    qT: np.ndarray

    @property
    def n_steps(self) -> int:
        return self.config.n_steps

    @property
    def dt(self) -> float:
        return self.config.dt

    def zero_control(self) -> ControlTrajectory:
        return ControlTrajectory.zeros(self.n_steps, self.basis.n_basis, self.dt)

    def optimizer_settings(self) -> OptimizerSettings:
        c = self.config
        return OptimizerSettings(tol_g=c.tol_g, tol_f=c.tol_f, patience=c.patience, max_iters=c.max_iters)


def build_problem(cfg: ProblemConfig) -> Problem:
    cfg.validate()
    mesh = build_structured_mesh(cfg.nx, cfg.ny)
    basis = ControlBasis(cfg.n_basis, cfg.rbf_width)
    model = ActuatorModel(cfg.c, cfg.u_max)
    ops = assemble_operators(mesh, basis, model, cfg.mu, quad_order=cfg.quad_order)
    dens = {}
    for name in ("initial", "target"):
        spec = getattr(cfg, f"{name}_density")
        try:
            dens[name] = project_density(mesh, ops.M, spec.build(name))
        except ValueError as exc:
            raise ConfigError(f"{name}_density", str(exc)) from exc
    return Problem(cfg, mesh, basis, model, ops, dens["initial"], dens["target"])
