"""Static figures written next to the CSV output (Agg backend, no display needed)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402

from .actuation import ControlBasis, ControlTrajectory, side_intensity  # noqa: E402
from .mesh import Mesh  # noqa: E402

_RC = {"figure.figsize": (4.6, 4.0), "font.size": 9, "axes.linewidth": 0.6, "savefig.dpi": 150}


def _tri(mesh: Mesh):
    return mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.triangles)


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_field(mesh: Mesh, values, path, title: str = "", cmap: str = "viridis", symmetric: bool = False) -> Path:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        kw = {}
        if symmetric:
            m = float(np.max(np.abs(values))) or 1.0
            kw = dict(vmin=-m, vmax=m)
            cmap = "RdBu_r"
        tc = ax.tripcolor(_tri(mesh), values, shading="gouraud", cmap=cmap, **kw)
        fig.colorbar(tc, ax=ax, shrink=0.85)
        ax.set_aspect("equal")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("$x_1$")
        ax.set_ylabel("$x_2$")
        if title:
            ax.set_title(title)
        return _save(fig, path)


def plot_history(history, path) -> Path:
    it = [r.iteration for r in history]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.semilogy(it, [r.cost for r in history], label="total")
        ax.semilogy(it, [max(r.terminal, 1e-300) for r in history], "--", label="terminal")
        ax.semilogy(it, [max(r.pg_norm, 1e-300) for r in history], ":", label="projected gradient")
        ax.set_xlabel("iteration")
        ax.legend(frameon=False)
        return _save(fig, path)


def plot_actuators(ctrl: ControlTrajectory, basis: ControlBasis, path, n_samples: int = 101) -> Path:
    """Space-time intensity ``u_a(s, t)`` of the four actuators."""
    s = np.linspace(0.0, 1.0, n_samples)
    U = np.stack([side_intensity(u, basis, s) for u in ctrl.values], axis=1)  # (4, N+1, S)
    t = ctrl.times
    vmax = float(U.max()) or 1.0
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(2, 2, figsize=(7, 5.5), sharex=True, sharey=True, layout="constrained")
        for a, ax in enumerate(axes.ravel()):
            pc = ax.pcolormesh(s, t, U[a], shading="auto", vmin=0.0, vmax=vmax, cmap="magma")
            ax.set_title(f"$u_{a + 1}$")
            ax.set_xlabel("$x_1$" if a % 2 == 0 else "$x_2$")
            ax.set_ylabel("t")
        fig.colorbar(pc, ax=axes, shrink=0.8, label="intensity")
        return _save(fig, path)


def plot_particles(mesh: Mesh, q, positions, rho, path, max_points: int = 5000) -> Path:
    with plt.rc_context(_RC):
        fig, (a0, a1) = plt.subplots(1, 2, figsize=(8.5, 3.8))
        a0.tricontourf(_tri(mesh), q, 20, cmap="viridis")
        pts = positions[:max_points]
        a0.plot(pts[:, 0], pts[:, 1], ",", color="w", alpha=0.6)
        a0.set_title("PDE density and particles")
        nb = rho.shape[0]
        im = a1.imshow(rho.T, origin="lower", extent=(0, 1, 0, 1), cmap="viridis")
        a1.set_title(f"histogram ({nb}x{nb})")
        fig.colorbar(im, ax=a1, shrink=0.85)
        for ax in (a0, a1):
            ax.set_aspect("equal")
        return _save(fig, path)
