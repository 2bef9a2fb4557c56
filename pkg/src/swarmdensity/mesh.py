"""Structured P1 triangulation of the unit square.

Sides are numbered counter-clockwise starting from the bottom:
1 is ``x2 = 0``, 2 is ``x1 = 1``, 3 is ``x2 = 1`` and 4 is ``x1 = 0``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: outward unit normal of each side, indexed by side id - 1
SIDE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class Mesh:
    nodes: np.ndarray           # (n_nodes, 2)
    triangles: np.ndarray       # (n_tri, 3), counter-clockwise
    boundary_edges: np.ndarray  # (n_edges, 2)
    edge_sides: np.ndarray      # (n_edges,) side id in 1..4
    nx: int
    ny: int

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self) -> np.ndarray:
        p = self.nodes[self.boundary_edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    def locate(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (triangle index, barycentric coordinates) for points in the closed square."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if np.any(points < 0.0) or np.any(points > 1.0):
            raise ValueError("points must lie in the closed unit square")
        sx = points[:, 0] * self.nx
        sy = points[:, 1] * self.ny
        i = np.minimum(np.floor(sx).astype(int), self.nx - 1)
        j = np.minimum(np.floor(sy).astype(int), self.ny - 1)
        xi = sx - i
        eta = sy - j
        # cell (i, j) holds triangles 2c (below the diagonal) and 2c+1 (above)
        upper = eta > xi
        tri = 2 * (j * self.nx + i) + upper
        bary = np.where(
            upper[:, None],
            np.column_stack([1.0 - eta, xi, eta - xi]),
            np.column_stack([1.0 - xi, xi - eta, eta]),
        )
        return tri, bary

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        """Evaluate the P1 field with nodal ``values`` at ``points``."""
        tri, bary = self.locate(points)
        return np.einsum("nk,nk->n", bary, np.asarray(values)[self.triangles[tri]])


def build_structured_mesh(nx: int, ny: int) -> Mesh:
    """Split an ``nx`` by ``ny`` grid into triangles along the bottom-left to top-right diagonal.

    Node ``(i, j)`` sits at ``(i/nx, j/ny)`` and has index ``j*(nx+1) + i``.
    """
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"mesh resolution must be positive integers, got nx={nx}, ny={ny}")
    nx, ny = int(nx), int(ny)

    ii, jj = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1))
    nodes = np.column_stack([ii.ravel() / nx, jj.ravel() / ny])

    def idx(i, j):
        return j * (nx + 1) + i

    ci, cj = np.meshgrid(np.arange(nx), np.arange(ny))
    ci, cj = ci.ravel(), cj.ravel()
    n00, n10 = idx(ci, cj), idx(ci + 1, cj)
    n01, n11 = idx(ci, cj + 1), idx(ci + 1, cj + 1)
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = np.column_stack([n00, n10, n11])
    triangles[1::2] = np.column_stack([n00, n11, n01])

    bx = np.arange(nx)
    by = np.arange(ny)
    edges = [
        np.column_stack([idx(bx, 0), idx(bx + 1, 0)]),
        np.column_stack([idx(nx, by), idx(nx, by + 1)]),
        np.column_stack([idx(bx + 1, ny), idx(bx, ny)]),
        np.column_stack([idx(0, by + 1), idx(0, by)]),
    ]
    sides = np.concatenate([np.full(len(e), s + 1) for s, e in enumerate(edges)])
    return Mesh(
        nodes=nodes,
        triangles=triangles,
        boundary_edges=np.vstack(edges).astype(np.int64),
        edge_sides=sides,
        nx=nx,
        ny=ny,
    )
