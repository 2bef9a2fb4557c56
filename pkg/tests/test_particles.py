import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from swarmdensity.actuation import ActuatorModel, ControlBasis, ControlTrajectory
from swarmdensity.assembly import assemble_operators, project_density
from swarmdensity.densities import GaussianMixture
from swarmdensity.mesh import build_structured_mesh
from swarmdensity.particles import (
    BLOCK_SIZE,
    ParticleEnsemble,
    bin_averages,
    compare,
    empirical_density,
    reflect,
    sample_density,
    simulate,
    uniform_ensemble,
)

CONST = ControlBasis(1, kind="constant")
FLAT = ActuatorModel(0.0, 1.0)


def test_reflect_rule():
    assert np.allclose(reflect([[0.5, 1.01]]), [[0.5, 0.99]])
    assert np.allclose(reflect([[-0.2, 0.3]]), [[0.2, 0.3]])
    assert np.allclose(reflect([[1.3, 2.4]]), [[0.7, 0.4]])


@given(arrays(np.float64, (20, 2), elements=st.floats(-3, 4)))
def test_reflect_contains(x):
    y = reflect(x)
    assert np.all((y >= 0) & (y <= 1))
    inside = np.all((x >= 0) & (x <= 1), axis=1)
    assert np.array_equal(y[inside], x[inside])


def test_no_noise_no_control_is_static():
    ens = uniform_ensemble(500, 3)
    out = simulate(ens, ControlTrajectory.zeros(10, 1, 0.01), CONST, FLAT, 0.0, substeps_per_dt=2)
    assert np.array_equal(out.positions, ens.positions)
    assert out.time == pytest.approx(0.1)
    assert out.generation == 1


def test_deterministic_drift():
    x0 = np.array([[0.2, 0.4], [0.995, 0.7]])
    vals = np.zeros((2, 4, 1))
    vals[:, 3, 0] = 1.0  # left actuator pushes along +x1
    dt = 0.01
    out = simulate(ParticleEnsemble(x0, seed=0), ControlTrajectory(vals, dt), CONST, FLAT, 0.0)
    assert np.allclose(out.positions, [[0.21, 0.4], [0.995, 0.7]])  # second one: 1.005 mirrored to 0.995


def test_seed_determinism_and_thread_invariance():
    ens = uniform_ensemble(2 * BLOCK_SIZE + 17, 9)
    ctrl = ControlTrajectory(np.full((5, 4, 3), 0.5), 0.01)
    basis, model = ControlBasis(3), ActuatorModel(1.0, 1.0)
    a = simulate(ens, ctrl, basis, model, 0.1, substeps_per_dt=2, threads=1)
    b = simulate(ens, ctrl, basis, model, 0.1, substeps_per_dt=2, threads=3)
    c = simulate(ens, ctrl, basis, model, 0.1, substeps_per_dt=2, threads=1)
    assert np.array_equal(a.positions, b.positions)
    assert np.array_equal(a.positions, c.positions)
    again = simulate(a, ctrl, basis, model, 0.1, substeps_per_dt=2)
    assert not np.array_equal(again.positions, simulate(ens, ctrl, basis, model, 0.1, substeps_per_dt=2).positions)


def test_containment_at_checkpoints():
    seen = []
    ens = uniform_ensemble(3000, 1)
    ctrl = ControlTrajectory(np.full((11, 4, 1), 20.0), 0.0025)
    simulate(ens, ctrl, CONST, FLAT, 0.1, substeps_per_dt=4, on_checkpoint=lambda i, t, X: seen.append((i, X)))
    assert [i for i, _ in seen] == list(range(11))
    for _, X in seen:
        assert np.all((X >= 0) & (X <= 1))


def test_step_guard():
    ens = uniform_ensemble(10, 0)
    vals = np.zeros((2, 4, 1))
    vals[:, 3] = 200.0
    with pytest.raises(ValueError, match="sub-step"):
        simulate(ens, ControlTrajectory(vals, 0.01), CONST, FLAT, 0.1)
    simulate(ens, ControlTrajectory(vals, 0.01), CONST, FLAT, 0.1, substeps_per_dt=10)
    with pytest.raises(ValueError):
        simulate(ens, ControlTrajectory.zeros(2, 1, 0.01), CONST, FLAT, -0.1)
    with pytest.raises(ValueError):
        simulate(ens, ControlTrajectory.zeros(2, 1, 0.01), CONST, FLAT, 0.1, substeps_per_dt=0)
    with pytest.raises(ValueError):
        ParticleEnsemble(np.array([[0.5, 1.2]]), seed=0)


def test_empirical_density_single_cell():
    ens = ParticleEnsemble(np.full((40, 2), 0.33), seed=0)
    rho = empirical_density(ens, 10)
    assert rho[3, 3] == 100.0
    assert rho.sum() / 100 == 1.0
    assert np.count_nonzero(rho) == 1


def test_uniform_histogram_binomial_bound():
    n, bins = 10**6, 10
    rho = empirical_density(uniform_ensemble(n, 0), bins)
    p = 1.0 / bins**2
    sigma = np.sqrt(p * (1 - p) / n) / p  # std of one normalised cell
    assert np.max(np.abs(rho - 1.0)) <= 6 * sigma
    assert rho.sum() * p == pytest.approx(1.0, abs=1e-12)


def test_compare_identities():
    mesh = build_structured_mesh(8, 8)
    M = assemble_operators(mesh, ControlBasis(1), ActuatorModel(), 0.1).M
    one = np.ones(mesh.n_nodes)
    assert compare(np.ones((5, 5)), one, mesh) == pytest.approx((0.0, 0.0), abs=1e-14)
    q = project_density(mesh, M, GaussianMixture(((0.4, 0.6),), (0.2,)))
    assert compare(bin_averages(mesh, q, 6), q, mesh) == (0.0, 0.0)
    with pytest.raises(ValueError):
        compare(np.ones((2, 3)), one, mesh)


def test_bin_averages_exact_for_linear_field():
    mesh = build_structured_mesh(4, 4)
    q = 1.0 + mesh.nodes[:, 0] - 0.5 * mesh.nodes[:, 1]
    avg = bin_averages(mesh, q, 5)
    c = (np.arange(5) + 0.5) / 5
    assert np.allclose(avg, 1.0 + c[:, None] - 0.5 * c[None, :], atol=1e-14)


def test_sample_density_follows_field():
    mesh = build_structured_mesh(10, 10)
    M = assemble_operators(mesh, ControlBasis(1), ActuatorModel(), 0.1).M
    q = project_density(mesh, M, GaussianMixture(((0.3, 0.7),), (0.15,)))
    ens = sample_density(mesh, q, 200_000, seed=2)
    l1, _ = compare(empirical_density(ens, 10), q, mesh)
    assert l1 < 0.03
    assert np.array_equal(ens.positions, sample_density(mesh, q, 200_000, seed=2).positions)


def test_zero_drift_relaxes_toward_uniform():
    mesh = build_structured_mesh(10, 10)
    M = assemble_operators(mesh, ControlBasis(1), ActuatorModel(), 0.1).M
    q = project_density(mesh, M, GaussianMixture(((0.25, 0.25),), (0.1,)))
    ens = sample_density(mesh, q, 100_000, seed=5)
    dist = []

    def record(i, t, X):
        rho = empirical_density(ParticleEnsemble(X, seed=0), 10)
        dist.append(np.sqrt(np.mean((rho - 1.0) ** 2)))

    simulate(ens, ControlTrajectory.zeros(8, 1, 0.0125), CONST, FLAT, 0.1, substeps_per_dt=2, on_checkpoint=record)
    assert np.all(np.diff(dist) < 0)
