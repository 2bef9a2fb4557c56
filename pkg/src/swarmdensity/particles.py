"""Reflected Euler-Maruyama simulation of the particle swarm and histogram comparison."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .actuation import ActuatorModel, ControlBasis, ControlTrajectory, eval_velocity, velocity_sup_norm
from .mesh import Mesh

#: particles per independent random stream; fixed so results do not depend on the thread count
BLOCK_SIZE = 4096


@dataclass
class ParticleEnsemble:
    positions: np.ndarray  # (n, 2)
    seed: int
    time: float = 0.0
    generation: int = 0    # bumped by every simulate call so successive runs draw fresh noise

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] != 2:
            raise ValueError("positions must have shape (n, 2)")
        if np.any(self.positions < 0.0) or np.any(self.positions > 1.0):
            raise ValueError("positions must lie in the closed unit square")

    @property
    def n_particles(self) -> int:
        return self.positions.shape[0]


def uniform_ensemble(n: int, seed: int) -> ParticleEnsemble:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA11]))
    return ParticleEnsemble(rng.random((n, 2)), seed=seed)


def sample_density(mesh: Mesh, q: np.ndarray, n: int, seed: int) -> ParticleEnsemble:
    """Draw ``n`` particles from the P1 density ``q`` by rejection sampling."""
    q = np.asarray(q, dtype=float)
    top = float(np.max(q))
    if top <= 0:
        raise ValueError("density has no positive values")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA12]))
    out = np.empty((0, 2))
    while len(out) < n:
        m = max(2 * (n - len(out)), 1024)
        x = rng.random((m, 2))
        keep = rng.random(m) * top < mesh.interpolate(q, x)
        out = np.vstack([out, x[keep]])
    return ParticleEnsemble(out[:n], seed=seed)


def reflect(x: np.ndarray) -> np.ndarray:
    """Mirror coordinates back into [0, 1] until every one is inside."""
    x = np.array(x, dtype=float)
    while True:
        lo = x < 0.0
        hi = x > 1.0
        if not (lo.any() or hi.any()):
            return x
        x[lo] = -x[lo]
        x[hi] = 2.0 - x[hi]


def _max_speed(ctrl: ControlTrajectory, basis, model) -> float:
    # the coefficients are linear in time, so the speed between two instants is bounded by the endpoints
    return max(velocity_sup_norm(u, basis, model, 33) for u in ctrl.values)


def simulate(ensemble: ParticleEnsemble, ctrl: ControlTrajectory, basis: ControlBasis, model: ActuatorModel,
             mu: float, substeps_per_dt: int = 1, threads: int = 1, on_checkpoint=None) -> ParticleEnsemble:
    """Advance the swarm over the whole control horizon.

    ``on_checkpoint(i, t, positions)`` is called after every control instant
    ``i`` (including ``i=0``) when given.
    """
    if substeps_per_dt < 1:
        raise ValueError("substeps_per_dt must be at least 1")
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    h = ctrl.dt / substeps_per_dt
    reach = _max_speed(ctrl, basis, model) * h + 6.0 * np.sqrt(2.0 * mu * h)
    if reach >= 1.0:
        raise ValueError(f"sub-step too large: drift plus 6 sigma noise reaches {reach:.3f} >= 1; raise substeps_per_dt")

    n = ensemble.n_particles
    n_blocks = max(1, -(-n // BLOCK_SIZE))
    seqs = np.random.SeedSequence([ensemble.seed, ensemble.generation]).spawn(n_blocks)
    X = ensemble.positions.copy()
    sigma = np.sqrt(2.0 * mu * h)
    t0 = ensemble.time

    def run_block(b: int, i_start: int, i_stop: int, rng):
        sl = slice(b * BLOCK_SIZE, min(n, (b + 1) * BLOCK_SIZE))
        x = X[sl]
        for i in range(i_start, i_stop):
            for s in range(substeps_per_dt):
                tau = (i + s / substeps_per_dt) * ctrl.dt
                v = eval_velocity(ctrl.at_time(tau), basis, model, x)
                x = reflect(x + v * h + sigma * rng.standard_normal(x.shape))
        X[sl] = x

    rngs = [np.random.default_rng(s) for s in seqs]
    stops = list(range(ctrl.n_steps + 1)) if on_checkpoint is not None else [0, ctrl.n_steps]
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        if on_checkpoint is not None:
            on_checkpoint(0, t0, X.copy())
        for a, b in zip(stops[:-1], stops[1:]):
            list(pool.map(lambda k: run_block(k, a, b, rngs[k]), range(n_blocks)))
            if on_checkpoint is not None:
                on_checkpoint(b, t0 + b * ctrl.dt, X.copy())
    return ParticleEnsemble(X, seed=ensemble.seed, time=t0 + ctrl.n_steps * ctrl.dt, generation=ensemble.generation + 1)


def empirical_density(ensemble: ParticleEnsemble, bins_per_axis: int) -> np.ndarray:
    """Histogram density ``rho[ix, iy]`` normalised to integrate to one."""
    if ensemble.n_particles < 1:
        raise ValueError("empty ensemble")
    if bins_per_axis < 1:
        raise ValueError("bins_per_axis must be positive")
    H, _, _ = np.histogram2d(ensemble.positions[:, 0], ensemble.positions[:, 1], bins=bins_per_axis, range=[[0, 1], [0, 1]])
    return H * bins_per_axis**2 / ensemble.n_particles


def bin_averages(mesh: Mesh, q: np.ndarray, bins_per_axis: int, points_per_axis: int = 3) -> np.ndarray:
    """Average of the P1 field over each histogram cell, ``[ix, iy]`` ordered."""
    g, w = np.polynomial.legendre.leggauss(points_per_axis)
    g, w = 0.5 * (g + 1.0), 0.5 * w
    edges = np.arange(bins_per_axis) / bins_per_axis
    xs = (edges[:, None] + g[None, :] / bins_per_axis).ravel()
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    vals = mesh.interpolate(q, np.column_stack([X.ravel(), Y.ravel()]))
    vals = vals.reshape(bins_per_axis, points_per_axis, bins_per_axis, points_per_axis)
    return np.einsum("apbq,p,q->ab", vals, w, w)


def compare(binned: np.ndarray, q: np.ndarray, mesh: Mesh) -> tuple[float, float]:
    """L1 and L2 distances between a histogram density and the bin-averaged P1 field."""
    binned = np.asarray(binned, dtype=float)
    nb = binned.shape[0]
    if binned.shape != (nb, nb):
        raise ValueError("binned density must be square")
    diff = binned - bin_averages(mesh, q, nb)
    area = 1.0 / nb**2
    return float(np.sum(np.abs(diff)) * area), float(np.sqrt(np.sum(diff**2) * area))
