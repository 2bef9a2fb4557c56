"""Acceptance suite: one PASS/FAIL line per criterion.

Run under pytest (``pytest tests/test_acceptance.py -s`` shows the lines as
they are produced) or directly with ``python3 tests/test_acceptance.py``.
"""
from __future__ import annotations

import sys
import time
from functools import lru_cache

import numpy as np
import pytest

from swarmdensity.actuation import ActuatorModel, ControlBasis, ControlTrajectory
from swarmdensity.assembly import assemble_operators, project_density
from swarmdensity.config import ProblemConfig
from swarmdensity.diagnostics import (
    check_energy,
    check_gradients,
    check_structure,
    dto_otd_study,
    fd_gradient,
    observed_orders,
)
from swarmdensity.mesh import build_structured_mesh
from swarmdensity.ocp import OptimizerSettings, optimize, reduced_gradient
from swarmdensity.particles import compare, empirical_density, simulate, uniform_ensemble
from swarmdensity.problem import build_problem
from swarmdensity.solver import solve_adjoint_dto, solve_forward

MU, ALPHA, T, DT = 0.1, 1e-4, 0.1, 0.0025
N_STEPS = 40


def _line(num: int, title: str, ok: bool, detail: str) -> str:
    return f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {title} | {detail}"


def _gauss_ops(n: int, quad_order: int = 4, weights: str = "interpolated", u_max: float = 20.0):
    return assemble_operators(build_structured_mesh(n, n), ControlBasis(10), ActuatorModel(1.0, u_max), MU,
                              quad_order=quad_order, weights=weights)


def _exact_ops(n: int, u_max: float = 20.0):
    return assemble_operators(build_structured_mesh(n, n), ControlBasis(1, kind="constant"), ActuatorModel(0.0, u_max), MU)


def criterion_1():
    t0 = time.perf_counter()
    mesh = build_structured_mesh(26, 26)
    ops = assemble_operators(mesh, ControlBasis(10), ActuatorModel(1.0), MU)
    ctrl = ControlTrajectory.zeros(N_STEPS, 10, DT)
    Q = solve_forward(ops, ctrl, np.ones(ops.n_nodes))
    P = solve_adjoint_dto(ops, ctrl, Q, np.ones(ops.n_nodes))
    sizes = (ctrl.flatten().size, Q.flatten().size, P.flatten().size)
    elapsed = time.perf_counter() - t0
    ok = mesh.n_nodes == 729 and sizes == (1640, 729 * 41, 729 * 40) and elapsed < 1.0
    return ok, f"nodes={mesh.n_nodes} |U|={sizes[0]} |Q|={sizes[1]} |P|={sizes[2]} ({elapsed:.2f}s, limit 1s)"


def criterion_2():
    t0 = time.perf_counter()
    exact = np.max(_exact_ops(10).structure_residual())
    g = _gauss_ops(10)
    rel = np.max(g.structure_residual()) / np.max(np.abs(g.B_data))
    pw = []
    for q in (4, 6):
        o = _gauss_ops(10, quad_order=q, weights="pointwise")
        pw.append(np.max(o.structure_residual()) / np.max(np.abs(o.B_data)))
    elapsed = time.perf_counter() - t0
    ok = exact <= 1e-13 and rel <= 1e-8 and pw[1] < pw[0] and elapsed < 10.0
    return ok, (f"exact={exact:.2e} (<=1e-13) gaussian rel={rel:.2e} (<=1e-8) "
                f"pointwise q4={pw[0]:.2e} > q6={pw[1]:.2e} ({elapsed:.1f}s, limit 10s)")


def criterion_3():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = []
    for ops in (_exact_ops(10), _gauss_ops(10)):
        samples = [rng.uniform(0, 20.0, (4, ops.n_basis)) for _ in range(20)]
        rep = check_structure(ops, samples)
        bound = 2 * 1e-8 * rep.commutation_scale
        worst.append((rep.commutation_residual, bound))
    elapsed = time.perf_counter() - t0
    ok = all(r <= b for r, b in worst) and elapsed < 10.0
    parts = " ".join(f"{name}={r:.2e}(<={b:.2e})" for name, (r, b) in zip(("exact", "gaussian"), worst))
    return ok, f"{parts} over 20 controls ({elapsed:.1f}s, limit 10s)"


@lru_cache(maxsize=1)
def _mass_runs():
    """Random feasible controls on both 15x15 configurations; reused by the energy monitors."""
    out = {}
    rng = np.random.default_rng(4)
    for name, ops in (("exact", _exact_ops(15)), ("gaussian", _gauss_ops(15))):
        t0 = time.perf_counter()
        ctrl = ControlTrajectory(rng.uniform(0, 20.0, (N_STEPS + 1, 4, ops.n_basis)), DT)
        q0 = project_density(ops.mesh, ops.M, lambda x: 1.0 + 0.8 * np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]))
        Q = solve_forward(ops, ctrl, q0)
        mass = Q.values @ (ops.M @ np.ones(ops.n_nodes))
        out[name] = (float(np.max(np.abs(mass - 1.0))), time.perf_counter() - t0, check_energy(ops, ctrl, Q, MU))
    return out


def criterion_4():
    runs = _mass_runs()
    tol = {"exact": 1e-12, "gaussian": 1e-7}
    ok = all(runs[k][0] <= tol[k] and runs[k][1] < 30.0 for k in tol)
    detail = " ".join(f"{k}={runs[k][0]:.2e}(<={tol[k]:.0e}, {runs[k][1]:.1f}s)" for k in tol)
    return ok, f"{detail} over N=40, limit 30s each"


def _small_instance():
    mesh = build_structured_mesh(2, 2)
    ops = assemble_operators(mesh, ControlBasis(2), ActuatorModel(1.0, 1.0), MU)
    rng = np.random.default_rng(11)
    q0 = project_density(mesh, ops.M, lambda x: 1.0 + 0.5 * np.sin(3 * x[:, 0] + 1) * np.cos(2 * x[:, 1]))
    qT = project_density(mesh, ops.M, lambda x: np.exp(-8 * np.sum((x - 0.6) ** 2, axis=1)))
    return ops, q0, qT, ControlTrajectory(rng.uniform(0.1, 0.9, (5, 4, 2)), 0.025)


def criterion_5():
    t0 = time.perf_counter()
    ops, q0, qT, ctrl = _small_instance()
    g = reduced_gradient(ops, ctrl, q0, qT, ALPHA)
    fd = fd_gradient(ops, q0, qT, ALPHA, ctrl, eps=1e-5)
    rel = np.abs(g - fd) / np.abs(fd)
    per_instant = rel.reshape(ctrl.values.shape).max(axis=(1, 2))
    dual = check_gradients(ops, q0, qT, ALPHA, ctrl, n_probes=10).tangent_adjoint_error
    elapsed = time.perf_counter() - t0
    ok = np.max(rel) <= 1e-6 and dual <= 1e-8 and elapsed < 60.0
    return ok, (f"max componentwise rel={np.max(rel):.2e} (i=0: {per_instant[0]:.1e}, i=N: {per_instant[-1]:.1e}; <=1e-6) "
                f"duality={dual:.2e} (<=1e-8) ({elapsed:.1f}s, limit 60s)")


def criterion_6():
    t0 = time.perf_counter()
    prob = build_problem(ProblemConfig())
    nb = prob.basis.n_basis
    rng = np.random.default_rng(6)
    shape = rng.uniform(0.2, 1.0, (4, nb))
    direction = rng.uniform(-1.0, 1.0, (4, nb))
    levels = dto_otd_study(prob.ops, prob.q0, prob.qT, ALPHA,
                           lambda t: 5.0 * shape * (1.0 + 0.5 * np.sin(2 * np.pi * t / T)),
                           lambda t: direction * np.cos(2 * np.pi * t / T), T, (20, 40, 80))
    gaps = [lv.gradient_gap for lv in levels]
    orders = observed_orders(gaps)
    elapsed = time.perf_counter() - t0
    ok = bool(np.all((orders >= 0.8) & (orders <= 1.2))) and elapsed < 120.0
    return ok, (f"gaps={', '.join(f'{x:.3e}' for x in gaps)} orders={', '.join(f'{o:.3f}' for o in orders)} "
                f"(0.8-1.2) ({elapsed:.1f}s, limit 120s)")


@lru_cache(maxsize=1)
def _optimization_run():
    prob = build_problem(ProblemConfig())
    cfg = prob.config
    settings = OptimizerSettings(tol_f=cfg.tol_f, patience=cfg.patience, max_iters=300)
    t0 = time.perf_counter()
    res = optimize(prob.ops, prob.q0, prob.qT, cfg.alpha, cfg.u_max, prob.zero_control(), settings)
    elapsed = time.perf_counter() - t0
    energy = check_energy(prob.ops, res.control, res.state, cfg.mu)
    return res, elapsed, energy


def criterion_7():
    res, elapsed, _ = _optimization_run()
    costs = np.array([r.cost for r in res.history])
    monotone = bool(np.all(np.diff(costs) < 0))
    ok = res.relative_reduction >= 0.90 and res.iterations <= 300 and monotone and elapsed <= 900.0
    return ok, (f"J0={costs[0]:.4e} J={costs[-1]:.4e} reduction={100 * res.relative_reduction:.2f}% (>=90%) "
                f"iterations={res.iterations} status={res.status} monotone={monotone} ({elapsed:.0f}s, limit 900s)")


@lru_cache(maxsize=1)
def _particle_run():
    mesh = build_structured_mesh(15, 15)
    basis, model = ControlBasis(10), ActuatorModel(1.0, 20.0)
    ops = assemble_operators(mesh, basis, model, MU)
    ctrl = ControlTrajectory.zeros(N_STEPS, 10, DT)
    Q = solve_forward(ops, ctrl, np.ones(ops.n_nodes))
    t0 = time.perf_counter()
    runs = [simulate(uniform_ensemble(100_000, 2024), ctrl, basis, model, MU, substeps_per_dt=4) for _ in range(2)]
    elapsed = (time.perf_counter() - t0) / 2
    l1, _ = compare(empirical_density(runs[0], 10), Q.final, mesh)
    same = np.array_equal(runs[0].positions, runs[1].positions)
    return l1, same, elapsed


def criterion_8():
    l1, same, elapsed = _particle_run()
    ok = l1 <= 0.05 and same and elapsed <= 120.0
    return ok, f"binned L1={l1:.4f} (<=0.05) deterministic={same} ({elapsed:.1f}s per run, limit 120s)"


@lru_cache(maxsize=1)
def _finite_bound_run():
    """Small-amplitude control for which every analytic bound is finite."""
    ops = _gauss_ops(15)
    ctrl = ControlTrajectory(np.random.default_rng(9).uniform(0, 0.05, (N_STEPS + 1, 4, 10)), DT)
    q0 = project_density(ops.mesh, ops.M, lambda x: 1.0 + 0.8 * np.cos(np.pi * x[:, 0]) * np.cos(np.pi * x[:, 1]))
    return check_energy(ops, ctrl, solve_forward(ops, ctrl, q0), MU)


def criterion_9():
    reports = {f"mass-{k}": rep for k, (_, _, rep) in _mass_runs().items()}
    reports["optimized"] = _optimization_run()[2]
    reports["small-control"] = _finite_bound_run()
    checks = [(f"{run}:{c.name}", c) for run, rep in reports.items() for c in rep.energy_checks]
    failed = [k for k, c in checks if not c.passed]
    finite = [(k, c) for k, c in checks if np.isfinite(c.rhs)]
    detail = f"{len(checks) - len(failed)}/{len(checks)} estimates hold, {len(finite)} with a finite bound"
    if finite:
        k, c = max(finite, key=lambda kc: kc[1].lhs / kc[1].rhs)
        detail += f"; tightest finite {k} lhs/rhs={c.lhs / c.rhs:.2e}"
    if failed:
        detail += f"; violated: {', '.join(failed)}"
    return not failed, detail


CRITERIA = [
    (1, "dimensional bookkeeping", criterion_1),
    (2, "B+B^T+C+L=0 residual", criterion_2),
    (3, "Gamma_q^T = Gamma_p commutation", criterion_3),
    (4, "mass conservation", criterion_4),
    (5, "gradient exactness", criterion_5),
    (6, "DtO/OtD first-order consistency", criterion_6),
    (7, "three-bump steering cost reduction", criterion_7),
    (8, "particle/PDE consistency", criterion_8),
    (9, "energy estimate monitors", criterion_9),
]


@pytest.mark.parametrize("num, title, fn", CRITERIA, ids=[f"criterion_{n}" for n, _, _ in CRITERIA])
def test_criterion(num, title, fn, capsys):
    ok, detail = fn()
    with capsys.disabled():
        print("\n" + _line(num, title, ok, detail))
    assert ok, detail


def main() -> int:
    failures = 0
    for num, title, fn in CRITERIA:
        ok, detail = fn()
        failures += not ok
        print(_line(num, title, ok, detail), flush=True)
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
