"""Command-line front end: ``swarmdensity <command> --config run.ini --out dir``."""
from __future__ import annotations

import argparse
import logging
import os
import platform
import sys
import time
from importlib import metadata
from pathlib import Path

import numpy as np

from . import io as sio
from .actuation import ActuatorModel, ControlBasis, ControlTrajectory
from .assembly import assemble_operators, project_density, total_mass
from .config import ConfigError, ProblemConfig, dump_config, load_config
from .diagnostics import check_energy, check_gradients, check_structure
from .mesh import build_structured_mesh
from .ocp import cost, optimize
from .problem import Problem, build_problem
from .solver import SolverError, solve_adjoint_dto, solve_adjoint_otd, solve_forward, Stepper

log = logging.getLogger("swarmdensity")

LOG_ENV = "SWARMDENSITY_LOG_LEVEL"
EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _versions() -> dict:
    out = {"python": platform.python_version()}
    for pkg in ("swarmdensity", "numpy", "scipy", "matplotlib"):
        try:
            out[pkg] = metadata.version(pkg)
        except metadata.PackageNotFoundError:
            out[pkg] = "unknown"
    return out


class Run:
    """Bookkeeping for one command: output directory, timings and manifest."""

    def __init__(self, command: str, cfg: ProblemConfig, out: Path, args):
        self.command = command
        self.cfg = cfg
        self.out = sio.ensure_dir(out)
        self.args = args
        self.timings: dict[str, str] = {}
        self.results: dict[str, str] = {}
        self.files: list[str] = []
        self._t0 = time.perf_counter()

    def timed(self, label, fn, *a, **kw):
        t = time.perf_counter()
        r = fn(*a, **kw)
        self.timings[label] = f"{time.perf_counter() - t:.3f} s"
        return r

    def add(self, *paths):
        for p in paths:
            if isinstance(p, (list, tuple)):
                self.add(*p)
            elif p is not None:
                self.files.append(str(Path(p).relative_to(self.out)))

    def finish(self, status: str):
        self.timings["total"] = f"{time.perf_counter() - self._t0:.3f} s"
        sio.write_manifest(self.out / "manifest.txt", {
            "command": self.command,
            "status": status,
            "seed": self.cfg.particle_seed,
            "threads": self.args.threads,
            "versions": _versions(),
            "timings": self.timings,
            "results": self.results,
            "outputs": {f"file{i}": f for i, f in enumerate(self.files)},
            "config": dump_config(self.cfg),
        })


def _load_control(prob: Problem, path) -> ControlTrajectory:
    if path is None:
        return prob.zero_control()
    ctrl = sio.read_control(path, prob.basis.n_basis, prob.dt)
    if ctrl.n_steps != prob.n_steps:
        raise ConfigError("control", f"file has {ctrl.n_steps} steps, configuration needs {prob.n_steps}")
    if not ctrl.is_feasible(prob.config.u_max, 1e-12):
        raise ConfigError("control", "coefficients outside [0, u_max]")
    return ctrl


def _plots(args) -> bool:
    return not args.no_plots


def cmd_mesh_info(prob: Problem, run: Run, args) -> int:
    N, nq = prob.n_steps, prob.mesh.n_nodes
    info = {
        "nodes": nq,
        "triangles": prob.mesh.n_triangles,
        "boundary_edges": len(prob.mesh.boundary_edges),
        "time_steps": N,
        "control_length": (N + 1) * 4 * prob.basis.n_basis,
        "state_length": nq * (N + 1),
        "adjoint_length": nq * N,
        "matrix_nnz": prob.ops.nnz,
    }
    for k, v in info.items():
        print(f"{k}: {v}")
    run.results.update({k: str(v) for k, v in info.items()})
    run.add(sio.write_mesh(run.out, prob.mesh))
    return EXIT_OK


def cmd_forward(prob: Problem, run: Run, args) -> int:
    ctrl = _load_control(prob, args.control)
    Q = run.timed("forward", solve_forward, prob.ops, ctrl, prob.q0, method=prob.config.linear_solver)
    c = cost(prob.ops, ctrl, Q, prob.qT, prob.config.alpha)
    mass = Q.values @ (prob.ops.M @ np.ones(prob.mesh.n_nodes))
    run.results.update(cost_total=f"{c.total:.10e}", cost_terminal=f"{c.terminal:.10e}",
                       mass_drift=f"{np.max(np.abs(mass - mass[0])):.3e}")
    run.add(sio.write_mesh(run.out, prob.mesh))
    run.add(sio.write_snapshots(run.out, prob.mesh, Q.values, prob.dt, "state", every=args.every))
    run.add(sio.write_series(run.out / "mass.csv", ["i", "t", "mass"], [(i, i * prob.dt, float(m)) for i, m in enumerate(mass)]))
    run.add(sio.write_vtk(run.out / "state_final.vtk", prob.mesh, {"q_final": Q.final, "q_target": prob.qT}))
    if _plots(args):
        from . import plotting
        run.add(plotting.plot_field(prob.mesh, Q.final, run.out / "state_final.png", "density at t = T"))
        run.add(plotting.plot_field(prob.mesh, prob.qT, run.out / "target.png", "target density"))
    print(f"J = {c.total:.6e} (terminal {c.terminal:.6e})")
    return EXIT_OK


def cmd_adjoint(prob: Problem, run: Run, args) -> int:
    ctrl = _load_control(prob, args.control)
    st = Stepper(prob.ops, ctrl, method=prob.config.linear_solver)
    Q = run.timed("forward", solve_forward, prob.ops, ctrl, prob.q0, stepper=st)
    P = run.timed("adjoint", solve_adjoint_dto, prob.ops, ctrl, Q, prob.qT, stepper=st)
    run.add(sio.write_snapshots(run.out, prob.mesh, P.values, prob.dt, "adjoint", first_index=1, every=args.every))
    if args.otd:
        Po = run.timed("adjoint_otd", solve_adjoint_otd, prob.ops, ctrl, Q, prob.qT)
        run.add(sio.write_snapshots(run.out, prob.mesh, Po.values, prob.dt, "adjoint_otd", every=args.every))
        gap = float(np.max(np.abs(Po.values[1:] - P.values)))
        run.results["dto_otd_max_difference"] = f"{gap:.6e}"
    run.add(sio.write_mesh(run.out, prob.mesh))
    if _plots(args):
        from . import plotting
        run.add(plotting.plot_field(prob.mesh, P.values[0], run.out / "adjoint_first.png", "adjoint at first instant", symmetric=True))
    return EXIT_OK


def _small_instance(cfg: ProblemConfig, seed: int):
    """3x3-node, four-step, two-basis problem used for componentwise gradient checks."""
    mesh = build_structured_mesh(2, 2)
    ops = assemble_operators(mesh, ControlBasis(2), ActuatorModel(cfg.c, cfg.u_max), cfg.mu, quad_order=cfg.quad_order)
    rng = np.random.default_rng(seed)
    q0 = project_density(mesh, ops.M, lambda x: 1.0 + 0.5 * np.sin(3 * x[:, 0] + 1) * np.cos(2 * x[:, 1]))
    qT = project_density(mesh, ops.M, lambda x: np.exp(-8 * np.sum((x - 0.6) ** 2, axis=1)))
    ctrl = ControlTrajectory(rng.uniform(0.1, 0.9, (5, 4, 2)) * min(cfg.u_max, 1.0), 0.025)
    return ops, q0, qT, ctrl


def cmd_grad_check(prob: Problem, run: Run, args) -> int:
    seed = prob.config.particle_seed
    if args.small:
        ops, q0, qT, ctrl = _small_instance(prob.config, seed)
    else:
        rng = np.random.default_rng(seed)
        ops, q0, qT = prob.ops, prob.q0, prob.qT
        ctrl = ControlTrajectory(rng.uniform(0, 1, prob.zero_control().values.shape) * prob.config.u_max * 0.5, prob.dt)
    rep = run.timed("gradient_check", check_gradients, ops, q0, qT, prob.config.alpha, ctrl, n_probes=args.probes, seed=seed)
    text = rep.to_text()
    (run.out / "gradient_check.txt").write_text(text)
    run.add(run.out / "gradient_check.txt")
    print(text, end="")
    ok = all(rep.flags().values())
    return EXIT_OK if ok else EXIT_CHECK_FAILED


def cmd_verify(prob: Problem, run: Run, args) -> int:
    cfg = prob.config
    rng = np.random.default_rng(cfg.particle_seed)
    samples = [rng.uniform(0, cfg.u_max, (4, prob.basis.n_basis)) for _ in range(20)]
    rep = run.timed("structure", check_structure, prob.ops, samples)
    ctrl = ControlTrajectory(rng.uniform(0, 1, prob.zero_control().values.shape), prob.dt)
    Q = run.timed("forward", solve_forward, prob.ops, ctrl, prob.q0, method=cfg.linear_solver)
    rep = rep.merge(run.timed("energy", check_energy, prob.ops, ctrl, Q, cfg.mu))
    ops, q0, qT, small = _small_instance(cfg, cfg.particle_seed)
    rep = rep.merge(run.timed("gradients", check_gradients, ops, q0, qT, cfg.alpha, small, n_probes=10, seed=cfg.particle_seed))
    text = rep.to_text()
    (run.out / "report.txt").write_text(text)
    (run.out / "lambda.csv").write_text(rep.series_csv(prob.dt))
    run.add(run.out / "report.txt", run.out / "lambda.csv")
    flags = rep.flags()
    if rep.mass_drift is not None:
        flags["mass"] = rep.mass_drift <= 1e-7
    run.results.update({k: str(v).lower() for k, v in flags.items()})
    print(text, end="")
    return EXIT_OK if all(flags.values()) else EXIT_CHECK_FAILED


def cmd_optimize(prob: Problem, run: Run, args) -> int:
    cfg = prob.config
    guess = _load_control(prob, args.control)

    def progress(r):
        log.info("iter %4d  J=%.6e  pg=%.3e", r.iteration, r.cost, r.pg_norm)

    res = run.timed("optimize", optimize, prob.ops, prob.q0, prob.qT, cfg.alpha, cfg.u_max, guess,
                    prob.optimizer_settings(), cfg.linear_solver, progress)
    rep = check_energy(prob.ops, res.control, res.state, cfg.mu)
    run.results.update(
        status=res.status,
        iterations=str(res.iterations),
        initial_cost=f"{res.history[0].cost:.10e}",
        final_cost=f"{res.cost.total:.10e}",
        relative_reduction=f"{res.relative_reduction:.6f}",
        energy_bounds="pass" if all(c.passed for c in rep.energy_checks) else "FAIL",
    )
    run.add(sio.write_history(run.out / "history.csv", res.history))
    run.add(sio.write_control(run.out, res.control, prob.basis))
    run.add(sio.write_mesh(run.out, prob.mesh))
    run.add(sio.write_snapshots(run.out, prob.mesh, res.state.values, prob.dt, "state", every=args.every))
    run.add(sio.write_vtk(run.out / "state_final.vtk", prob.mesh,
                          {"q_final": res.state.final, "q_target": prob.qT, "difference": prob.qT - res.state.final}))
    (run.out / "energy_report.txt").write_text(rep.to_text())
    run.add(run.out / "energy_report.txt")
    if _plots(args):
        from . import plotting
        run.add(plotting.plot_field(prob.mesh, res.state.final, run.out / "state_final.png", "density at t = T"))
        run.add(plotting.plot_field(prob.mesh, prob.qT, run.out / "target.png", "target density"))
        run.add(plotting.plot_field(prob.mesh, prob.qT - res.state.final, run.out / "difference.png", "target minus final", symmetric=True))
        run.add(plotting.plot_history(res.history, run.out / "history.png"))
        run.add(plotting.plot_actuators(res.control, prob.basis, run.out / "actuators.png"))
    print(f"status {res.status} after {res.iterations} iterations: J {res.history[0].cost:.6e} -> {res.cost.total:.6e} "
          f"({100 * res.relative_reduction:.2f}% reduction)")
    return EXIT_OK


def cmd_particles(prob: Problem, run: Run, args) -> int:
    from .particles import compare, empirical_density, bin_averages, sample_density, simulate, uniform_ensemble

    cfg = prob.config
    ctrl = _load_control(prob, args.control)
    Q = run.timed("forward", solve_forward, prob.ops, ctrl, prob.q0, method=cfg.linear_solver)
    if cfg.initial_density.kind == "uniform":
        ens = uniform_ensemble(cfg.particle_count, cfg.particle_seed)
    else:
        ens = sample_density(prob.mesh, prob.q0, cfg.particle_count, cfg.particle_seed)
    rows = []
    snap_dir = sio.ensure_dir(run.out / "particles")

    def checkpoint(i, t, X):
        if i % args.every and i != prob.n_steps:
            return
        rho = empirical_density(type(ens)(X, ens.seed), cfg.particle_bins)
        l1, l2 = compare(rho, Q.values[i], prob.mesh)
        rows.append((i, t, l1, l2))
        if args.snapshots:
            run.add(sio.write_particles(snap_dir / f"particles_{i:04d}.csv", X))

    final = run.timed("simulate", simulate, ens, ctrl, prob.basis, prob.model, cfg.mu, cfg.particle_substeps,
                      threads=args.threads, on_checkpoint=checkpoint)
    rho = empirical_density(final, cfg.particle_bins)
    l1, l2 = compare(rho, Q.final, prob.mesh)
    run.results.update(l1=f"{l1:.6e}", l2=f"{l2:.6e}", particles=str(final.n_particles))
    run.add(sio.write_particles(run.out / "particles_final.csv", final.positions))
    run.add(sio.write_binned(run.out / "binned_density.csv", rho, bin_averages(prob.mesh, Q.final, cfg.particle_bins)))
    run.add(sio.write_series(run.out / "particle_distance.csv", ["i", "t", "l1", "l2"], rows))
    if _plots(args):
        from . import plotting
        run.add(plotting.plot_particles(prob.mesh, Q.final, final.positions, rho, run.out / "particles.png"))
    print(f"binned L1 distance {l1:.4e}, L2 distance {l2:.4e}")
    return EXIT_OK


COMMANDS = {
    "verify": cmd_verify,
    "forward": cmd_forward,
    "adjoint": cmd_adjoint,
    "grad-check": cmd_grad_check,
    "optimize": cmd_optimize,
    "particles": cmd_particles,
    "mesh-info": cmd_mesh_info,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI configuration file (defaults are used when omitted)")
    common.add_argument("--out", type=Path, help="output directory (overrides [output] dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides [particles] seed)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for particle simulation")
    common.add_argument("--no-plots", action="store_true", help="skip figure rendering")
    common.add_argument("--every", type=int, default=10, help="write every n-th snapshot")

    p = argparse.ArgumentParser(prog="swarmdensity", description="Boundary-actuated swarm density control.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("verify", "mesh-info"):
        sub.add_parser(name, parents=[common])
    for name in ("forward", "adjoint", "optimize", "particles"):
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--control", type=Path, help="control coefficient CSV (default: zero control / zero initial guess)")
        if name == "adjoint":
            sp.add_argument("--otd", action="store_true", help="also solve the discretized continuous adjoint")
        if name == "particles":
            sp.add_argument("--snapshots", action="store_true", help="write particle positions at checkpoints")
    g = sub.add_parser("grad-check", parents=[common])
    g.add_argument("--probes", type=int, default=3, help="number of random directions")
    g.add_argument("--small", action="store_true", help="use the 3x3-node reference instance")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=os.environ.get(LOG_ENV, "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else ProblemConfig().validate()
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed", "must be nonnegative")
            cfg.particle_seed = args.seed
        if args.threads < 1:
            raise ConfigError("--threads", "must be positive")
        if args.every < 1:
            raise ConfigError("--every", "must be positive")
        prob = build_problem(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    run = Run(args.command, cfg, args.out or Path(cfg.output_dir), args)
    try:
        code = COMMANDS[args.command](prob, run, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        run.finish("config-error")
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        run.finish("solver-error")
        return EXIT_SOLVER
    run.finish("ok" if code == EXIT_OK else "checks-failed")
    return code


if __name__ == "__main__":
    sys.exit(main())
