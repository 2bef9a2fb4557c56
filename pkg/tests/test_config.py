import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from swarmdensity.assembly import total_mass
from swarmdensity.config import ConfigError, DensitySpec, ProblemConfig, dump_config, load_config, loads_config
from swarmdensity.densities import AnnulusSector, GaussianMixture, Uniform, from_spec, three_bumps
from swarmdensity.problem import build_problem


def test_defaults():
    cfg = ProblemConfig().validate()
    assert (cfg.mu, cfg.alpha, cfg.T, cfg.dt) == (0.1, 1e-4, 0.1, 0.0025)
    assert cfg.n_steps == 40
    assert cfg.target_density.kind == "gaussian-mixture"


def test_empty_file_gives_defaults(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("")
    assert load_config(p) == ProblemConfig()


def test_round_trip_defaults():
    cfg = ProblemConfig()
    assert loads_config(dump_config(cfg)) == cfg


def test_round_trip_annulus():
    text = """
[problem]
mu = 0.05
T = 0.2
dt = 0.01
[discretization]
nx = 8
rbf_width = 0.2
linear_solver = bicgstab
[optimizer]
tol_g = 1e-7
[target_density]
kind = annulus-sector
center = 0.5 0.45
radii = 0.15 0.3
angles = 30 330
smoothing = 0.02
"""
    cfg = loads_config(text)
    assert cfg.n_steps == 20 and cfg.rbf_width == 0.2 and cfg.tol_g == 1e-7
    assert cfg.target_density.angles == [30.0, 330.0]
    assert loads_config(dump_config(cfg)) == cfg
    dens = cfg.target_density.build()
    assert isinstance(dens, AnnulusSector)
    assert dens.angles[1] == pytest.approx(math.radians(330))


@pytest.mark.parametrize("text, field", [
    ("[problem]\nmu = -1", "mu"),
    ("[problem]\nmu = abc", "problem.mu"),
    ("[problem]\ndt = 0.003", "dt"),
    ("[problem]\nc = -0.5", "c"),
    ("[discretization]\nnx = 0", "nx"),
    ("[discretization]\nquad_order = 1", "quad_order"),
    ("[discretization]\nlinear_solver = lu", "linear_solver"),
    ("[discretization]\nfoo = 1", "discretization.foo"),
    ("[nope]\na = 1", "nope"),
    ("[particles]\nseed = -3", "particle_seed"),
    ("[target_density]\nkind = blob", "target.kind"),
    ("[target_density]\nkind = gaussian-mixture\ncenters = 0.1 0.2; 0.3\nwidths = 0.1", "target_density.centers"),
    ("[target_density]\nkind = gaussian-mixture\ncenters = 0.1 0.2\nwidths = 0.1 0.2", "target"),
    ("[initial_density]\nkind = annulus-sector\nradii = 0.3 0.1", "initial"),
    ("[initial_density]\nshape = round", "initial_density.shape"),
    ("not an ini", "config"),
])
def test_field_level_errors(text, field):
    with pytest.raises(ConfigError) as exc:
        loads_config(text)
    assert exc.value.field == field


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


@given(st.floats(0.01, 1.0), st.integers(1, 200), st.floats(1e-6, 1.0), st.integers(2, 30))
def test_round_trip_scalars(mu, n, alpha, nx):
    cfg = ProblemConfig(mu=mu, alpha=alpha, T=n * 0.005, dt=0.005, nx=nx)
    try:
        cfg.validate()
    except ConfigError:
        return
    assert loads_config(dump_config(cfg)) == cfg


def test_densities_evaluate():
    x = np.array([[0.5, 0.5], [0.0, 1.0]])
    assert np.array_equal(Uniform()(x), [1.0, 1.0])
    g = GaussianMixture(((0.5, 0.5),), (0.1,), (2.0,))
    assert g(x)[0] == 2.0
    assert g(x)[1] == pytest.approx(2.0 * np.exp(-0.5 / 0.02))
    with pytest.raises(ValueError):
        GaussianMixture(((0.5, 0.5),), (0.1, 0.2))
    with pytest.raises(ValueError):
        GaussianMixture(((0.5, 0.5),), (-0.1,))


def test_annulus_sector_shape():
    a = AnnulusSector((0.5, 0.5), (0.2, 0.35), (np.pi / 4, 7 * np.pi / 4), 0.01)
    on_ring = np.array([[0.5 - 0.275, 0.5], [0.5, 0.775], [0.5, 0.225]])
    gap = np.array([[0.775, 0.5]])  # angle zero, inside the opening
    assert np.all(a(on_ring) > 0.99)
    assert a(gap)[0] < 1e-3
    assert a(np.array([[0.5, 0.5]]))[0] < 1e-3
    full = AnnulusSector(angles=(0.0, 2 * np.pi))
    assert full(np.array([[0.775, 0.5]]))[0] > 0.5


def test_from_spec():
    assert isinstance(from_spec({"kind": "uniform"}), Uniform)
    g = from_spec({"kind": "gaussian-mixture", "centers": [[0.2, 0.2]], "widths": [0.1]})
    assert g.centers == ((0.2, 0.2),)
    a = from_spec({"kind": "annulus-sector", "radii": [0.1, 0.2]})
    assert a.radii == (0.1, 0.2)
    with pytest.raises(ValueError):
        from_spec({"kind": "square"})


def test_build_problem_unit_mass():
    cfg = ProblemConfig(nx=6, ny=5, n_basis=3)
    cfg.target_density = DensitySpec(kind="annulus-sector")
    prob = build_problem(cfg)
    assert prob.mesh.n_nodes == 42
    for q in (prob.q0, prob.qT):
        assert abs(total_mass(prob.ops.M, q) - 1.0) < 1e-12
    assert prob.zero_control().values.shape == (41, 4, 3)
    s = prob.optimizer_settings()
    assert s.max_iters == cfg.max_iters and s.tol_f == cfg.tol_f


def test_three_bumps_disjoint():
    t = three_bumps()
    c = np.asarray(t.centers)
    d = np.linalg.norm(c[:, None] - c[None], axis=-1)
    assert np.min(d[np.triu_indices(3, 1)]) > 4 * t.widths[0]


def test_readme_example_parses():
    import re
    from pathlib import Path

    readme = Path(__file__).resolve().parents[1] / "README.md"
    block = re.search(r"```ini\n(.*?)```", readme.read_text(), re.S).group(1)
    assert loads_config(block) == ProblemConfig()
