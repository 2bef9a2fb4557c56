"""CSV, manifest and legacy-VTK writers."""
from __future__ import annotations

import csv
import os
from pathlib import Path

import numpy as np

from .actuation import ControlBasis, ControlTrajectory, side_intensity
from .mesh import Mesh


def _writer(path):
    fh = open(path, "w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def _g(x) -> str:
    return f"{x:.17g}"


def write_mesh(out: Path, mesh: Mesh) -> list[Path]:
    out = Path(out)
    p_nodes, p_tri = out / "mesh_nodes.csv", out / "mesh_triangles.csv"
    fh, w = _writer(p_nodes)
    with fh:
        w.writerow(["node", "x", "y"])
        for i, (x, y) in enumerate(mesh.nodes):
            w.writerow([i, _g(x), _g(y)])
    fh, w = _writer(p_tri)
    with fh:
        w.writerow(["triangle", "n0", "n1", "n2"])
        for i, t in enumerate(mesh.triangles):
            w.writerow([i, *t])
    return [p_nodes, p_tri]


def write_snapshots(out: Path, mesh: Mesh, values: np.ndarray, dt: float, prefix: str, first_index: int = 0,
                    every: int = 1) -> Path:
    """One CSV per stored instant plus a manifest of (index, time, file)."""
    out = Path(out)
    sub = out / prefix
    sub.mkdir(parents=True, exist_ok=True)
    manifest = out / f"{prefix}_manifest.csv"
    fh, w = _writer(manifest)
    with fh:
        w.writerow(["i", "t", "file"])
        n = len(values)
        for r in range(n):
            i = r + first_index
            if (i % every) and r != n - 1:
                continue
            name = f"{prefix}_{i:04d}.csv"
            w.writerow([i, _g(i * dt), f"{prefix}/{name}"])
            fh2, w2 = _writer(sub / name)
            with fh2:
                w2.writerow(["node", "x", "y", "value"])
                for k, ((x, y), v) in enumerate(zip(mesh.nodes, values[r])):
                    w2.writerow([k, _g(x), _g(y), _g(v)])
    return manifest


def write_vtk(path, mesh: Mesh, fields: dict[str, np.ndarray], title: str = "swarmdensity") -> Path:
    """Legacy ASCII VTK unstructured grid with nodal point data."""
    path = Path(path)
    with open(path, "w", newline="\n", encoding="ascii") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {mesh.n_nodes} double\n")
        for x, y in mesh.nodes:
            fh.write(f"{_g(x)} {_g(y)} 0\n")
        nt = mesh.n_triangles
        fh.write(f"CELLS {nt} {4 * nt}\n")
        for a, b, c in mesh.triangles:
            fh.write(f"3 {a} {b} {c}\n")
        fh.write(f"CELL_TYPES {nt}\n" + "5\n" * nt)
        fh.write(f"POINT_DATA {mesh.n_nodes}\n")
        for name, vals in fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            fh.write("\n".join(_g(v) for v in vals) + "\n")
    return path


def write_history(path, history) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(["iter", "cost", "terminal", "control", "pg_norm", "step", "evaluations"])
        for r in history:
            w.writerow([r.iteration, _g(r.cost), _g(r.terminal), _g(r.control), _g(r.pg_norm), _g(r.step), r.evaluations])
    return Path(path)


def write_control(out: Path, ctrl: ControlTrajectory, basis: ControlBasis, n_samples: int = 101) -> list[Path]:
    """Coefficient table ``(i, a, k, value)`` and the intensities ``u_a(s, t_i)``."""
    out = Path(out)
    p_coef, p_int = out / "control.csv", out / "control_intensity.csv"
    fh, w = _writer(p_coef)
    with fh:
        w.writerow(["i", "t", "a", "k", "value"])
        for i, u in enumerate(ctrl.values):
            for a in range(u.shape[0]):
                for k in range(u.shape[1]):
                    w.writerow([i, _g(i * ctrl.dt), a + 1, k + 1, _g(u[a, k])])
    s = np.linspace(0.0, 1.0, n_samples)
    fh, w = _writer(p_int)
    with fh:
        w.writerow(["i", "t", "a", "s", "u"])
        for i, u in enumerate(ctrl.values):
            ua = side_intensity(u, basis, s)
            for a in range(4):
                for sj, v in zip(s, ua[a]):
                    w.writerow([i, _g(i * ctrl.dt), a + 1, _g(sj), _g(v)])
    return [p_coef, p_int]


def read_control(path, n_basis: int, dt: float) -> ControlTrajectory:
    """Inverse of the coefficient table written by :func:`write_control`."""
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = int(rows[:, 0].max()) + 1
    vals = np.zeros((n, 4, n_basis))
    vals[rows[:, 0].astype(int), rows[:, 2].astype(int) - 1, rows[:, 3].astype(int) - 1] = rows[:, 4]
    return ControlTrajectory(vals, dt)


def write_particles(path, positions: np.ndarray) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(["particle", "x", "y"])
        for i, (x, y) in enumerate(positions):
            w.writerow([i, _g(x), _g(y)])
    return Path(path)


def write_binned(path, rho: np.ndarray, pde: np.ndarray | None = None) -> Path:
    nb = rho.shape[0]
    fh, w = _writer(path)
    with fh:
        w.writerow(["ix", "iy", "x_center", "y_center", "empirical"] + (["pde"] if pde is not None else []))
        for ix in range(nb):
            for iy in range(nb):
                row = [ix, iy, _g((ix + 0.5) / nb), _g((iy + 0.5) / nb), _g(rho[ix, iy])]
                if pde is not None:
                    row.append(_g(pde[ix, iy]))
                w.writerow(row)
    return Path(path)


def write_series(path, header: list[str], rows) -> Path:
    fh, w = _writer(path)
    with fh:
        w.writerow(header)
        for r in rows:
            w.writerow([_g(v) if isinstance(v, float) else v for v in r])
    return Path(path)


def write_manifest(path, entries: dict) -> Path:
    """Structured ``key: value`` text; nested dicts become indented blocks."""

    def emit(fh, d, indent):
        for k, v in d.items():
            if isinstance(v, dict):
                fh.write(f"{' ' * indent}{k}:\n")
                emit(fh, v, indent + 2)
            elif isinstance(v, str) and "\n" in v:
                fh.write(f"{' ' * indent}{k}: |\n")
                for line in v.rstrip("\n").split("\n"):
                    fh.write(f"{' ' * (indent + 2)}{line}\n")
            else:
                fh.write(f"{' ' * indent}{k}: {v}\n")

    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        emit(fh, entries, 0)
    return Path(path)


def read_manifest_block(path, key: str = "config") -> str:
    """Text of a top-level ``key: |`` block written by :func:`write_manifest`."""
    lines = Path(path).read_text(encoding="utf-8").split("\n")
    try:
        start = lines.index(f"{key}: |") + 1
    except ValueError:
        raise KeyError(key) from None
    block = []
    for line in lines[start:]:
        if line and not line.startswith("  "):
            break
        block.append(line[2:])
    return "\n".join(block).rstrip("\n") + "\n"


def ensure_dir(path) -> Path:
    p = Path(path)
    os.makedirs(p, exist_ok=True)
    return p
