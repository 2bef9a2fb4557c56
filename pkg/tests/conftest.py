import numpy as np
import pytest
from hypothesis import settings

from swarmdensity.actuation import ActuatorModel, ControlBasis, ControlTrajectory
from swarmdensity.assembly import assemble_operators, project_density
from swarmdensity.mesh import build_structured_mesh

settings.register_profile("default", deadline=None, max_examples=30)
settings.load_profile("default")


@pytest.fixture(scope="session")
def exact_ops():
    """c = 0 and constant basis: every integrand is a polynomial."""
    mesh = build_structured_mesh(10, 10)
    return assemble_operators(mesh, ControlBasis(1, kind="constant"), ActuatorModel(0.0, 1.0), 0.1)


@pytest.fixture(scope="session")
def gauss_ops():
    mesh = build_structured_mesh(10, 10)
    return assemble_operators(mesh, ControlBasis(10), ActuatorModel(1.0, 1.0), 0.1)


@pytest.fixture(scope="session")
def tiny():
    """3x3 nodes, two basis functions, four steps."""
    mesh = build_structured_mesh(2, 2)
    ops = assemble_operators(mesh, ControlBasis(2), ActuatorModel(1.0, 1.0), 0.1)
    rng = np.random.default_rng(11)
    q0 = project_density(mesh, ops.M, lambda x: 1.0 + 0.5 * np.sin(3 * x[:, 0] + 1) * np.cos(2 * x[:, 1]))
    qT = project_density(mesh, ops.M, lambda x: np.exp(-8 * np.sum((x - 0.6) ** 2, axis=1)))
    ctrl = ControlTrajectory(rng.uniform(0.1, 0.9, (5, 4, 2)), 0.025)
    return ops, q0, qT, ctrl

