"""P1 finite element operators for the actuated advection-diffusion equation.

All matrices live on the sparsity pattern of the P1 mass matrix, so every
operator is stored as a data vector aligned with that pattern.  Building a
control-dependent matrix is then a single contraction over the data arrays.

For side ``a`` with weight ``w_{a,k}(x) = psi_k(x_t) * decay_a(x)`` acting on
the coordinate ``x_d`` (see :mod:`swarmdensity.actuation`):

* ``B[a,k]_ij = int w * dphi_j/dx_d * phi_i``
* ``C[a,k]_ij = int dw/dx_d * phi_j * phi_i``
* ``L[a,k]_ij = -int_Gamma w * phi_j * phi_i * n_d``

so that ``B + B^T + C + L = 0`` (integration by parts over the square).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .actuation import N_SIDES, PUSH_AXIS, SIDE_SIGN, TANGENT_AXIS, ActuatorModel, ControlBasis
from .mesh import SIDE_NORMALS, Mesh
from .quadrature import edge_rule, triangle_rule


@dataclass(frozen=True, eq=False)
class OperatorSet:
    mesh: Mesh
    basis: ControlBasis
    model: ActuatorModel
    mu: float
    quad_order: int
    weights: str
    indptr: np.ndarray
    indices: np.ndarray
    rows: np.ndarray       # row index of every stored entry
    M_data: np.ndarray     # (nnz,)
    A_data: np.ndarray     # (nnz,)
    B_data: np.ndarray     # (4, N_c, nnz)
    C_data: np.ndarray
    L_data: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.mesh.n_nodes

    @property
    def n_basis(self) -> int:
        return self.basis.n_basis

    @property
    def nnz(self) -> int:
        return self.indices.size

    @property
    def G_data(self) -> np.ndarray:
        """Data of ``B + C + L`` per side and basis function."""
        return self._cached("_G", lambda: self.B_data + self.C_data + self.L_data)

    @property
    def transpose_perm(self) -> np.ndarray:
        """Permutation mapping pattern data to the data of the transposed matrix."""

        def build():
            n = self.n_nodes
            keys = self.rows * n + self.indices
            tkeys = self.indices * n + self.rows
            return np.searchsorted(keys, tkeys)

        return self._cached("_tperm", build)

    def _cached(self, name, fn):
        try:
            return self.__dict__[name]
        except KeyError:
            val = fn()
            object.__setattr__(self, name, val)
            return val

    def matrix(self, data: np.ndarray) -> sp.csr_matrix:
        n = self.n_nodes
        return sp.csr_matrix((np.asarray(data, dtype=float), self.indices, self.indptr), shape=(n, n))

    @property
    def M(self) -> sp.csr_matrix:
        return self.matrix(self.M_data)

    @property
    def A(self) -> sp.csr_matrix:
        return self.matrix(self.A_data)

    def B(self, side: int, k: int) -> sp.csr_matrix:
        """Transport matrix of ``side`` (1..4) and basis index ``k`` (1..N_c)."""
        return self.matrix(self.B_data[side - 1, k - 1])

    def C(self, side: int, k: int) -> sp.csr_matrix:
        return self.matrix(self.C_data[side - 1, k - 1])

    def L(self, side: int, k: int) -> sp.csr_matrix:
        return self.matrix(self.L_data[side - 1, k - 1])

    def structure_residual(self) -> np.ndarray:
        """``max |B + B^T + C + L|`` for every (side, basis) pair, shape (4, N_c)."""
        R = self.B_data + self.B_data[..., self.transpose_perm] + self.C_data + self.L_data
        return np.max(np.abs(R), axis=-1)


def _pattern(mesh: Mesh):
    n = mesh.n_nodes
    tri = mesh.triangles
    r = np.repeat(tri, 3, axis=1).ravel()
    c = np.tile(tri, (1, 3)).ravel()
    keys = np.unique(r * n + c)
    rows = keys // n
    cols = keys % n
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return keys, rows, cols, np.cumsum(indptr)


def _scatter(keys, n, rows_loc, cols_loc, vals):
    pos = np.searchsorted(keys, rows_loc.ravel() * n + cols_loc.ravel())
    return np.bincount(pos, weights=vals.ravel(), minlength=keys.size)


def assemble_operators(
    mesh: Mesh,
    basis: ControlBasis,
    model: ActuatorModel,
    mu: float,
    quad_order: int = 4,
    edge_points: int | None = None,
    weights: str = "interpolated",
) -> OperatorSet:
    """Assemble ``M``, ``A`` and the families ``B``, ``C``, ``L`` on ``mesh``.

    Volume terms use one symmetric triangle rule of degree ``quad_order``;
    boundary terms use ``edge_points`` Gauss points (default ``quad_order//2 + 2``).

    With ``weights="interpolated"`` every actuator weight ``psi_k * decay`` is
    replaced by its continuous Lagrange interpolant of degree ``quad_order - 1``
    on each triangle.  All integrands are then polynomials the rules integrate
    exactly, and ``B + B^T + C + L = 0`` holds to round-off, which in turn
    makes the scheme conserve mass exactly.  ``weights="pointwise"`` evaluates
    the true weight at the quadrature points instead; the identity then only
    holds up to quadrature error.
    """
    if mu <= 0:
        raise ValueError(f"diffusion constant mu must be positive, got {mu}")
    if mesh.n_triangles == 0:
        raise ValueError("cannot assemble on an empty mesh")
    if quad_order < 2:
        raise ValueError("quad_order must be at least 2")
    if edge_points is None:
        edge_points = quad_order // 2 + 2

    n = mesh.n_nodes
    nc = basis.n_basis
    keys, rows, cols, indptr = _pattern(mesh)
    tri = mesh.triangles
    P = mesh.nodes[tri]                        # (m, 3, 2)
    d1 = P[:, 1] - P[:, 0]
    d2 = P[:, 2] - P[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    area = 0.5 * det
    # gradients of the barycentric coordinates, (m, 3, 2)
    g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
    g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
    grad = np.stack([-g1 - g2, g1, g2], axis=1)

    ri = np.broadcast_to(tri[:, :, None], (len(tri), 3, 3))
    ci = np.broadcast_to(tri[:, None, :], (len(tri), 3, 3))

    M_loc = area[:, None, None] / 12.0 * (np.ones((3, 3)) + np.eye(3))
    A_loc = mu * area[:, None, None] * np.einsum("eid,ejd->eij", grad, grad)
    M_data = _scatter(keys, n, ri, ci, M_loc)
    A_data = _scatter(keys, n, ri, ci, A_loc)

    bary, wq = triangle_rule(quad_order)
    xq = np.einsum("qi,eid->eqd", bary, P)     # (m, nq, 2)
    phiphi = np.einsum("qi,qj->qij", bary, bary)

    be = mesh.boundary_edges
    se, we = edge_rule(edge_points)
    Pe = mesh.nodes[be]                        # (b, 2, 2)
    phie = np.column_stack([1.0 - se, se])     # (ng, 2)
    elen = mesh.edge_lengths()
    normals = SIDE_NORMALS[mesh.edge_sides - 1]
    eri = np.broadcast_to(be[:, :, None], (len(be), 2, 2))
    eci = np.broadcast_to(be[:, None, :], (len(be), 2, 2))

    if weights == "interpolated":
        degree = max(1, quad_order - 1)
        lat = _lattice(degree)
        Phi, dPhi = _lagrange_2d(lat, bary[:, 1:])          # (nq, nl), (nq, nl, 2)
        xl = P[:, None, 0] + lat[None, :, 0, None] * d1[:, None] + lat[None, :, 1, None] * d2[:, None]
        s_lat = np.linspace(0.0, 1.0, degree + 1)
        Phi_e = _lagrange_1d(s_lat, se)                      # (ng, r+1)
        xel = Pe[:, None, 0] * (1.0 - s_lat)[None, :, None] + Pe[:, None, 1] * s_lat[None, :, None]
    elif weights == "pointwise":
        xe = Pe[:, None, 0] * (1.0 - se)[None, :, None] + Pe[:, None, 1] * se[None, :, None]
    else:
        raise ValueError(f"unknown weight treatment {weights!r}")

    nnz = keys.size
    B_data = np.zeros((N_SIDES, nc, nnz))
    C_data = np.zeros((N_SIDES, nc, nnz))
    L_data = np.zeros((N_SIDES, nc, nnz))
    for a in range(N_SIDES):
        side = a + 1
        d = PUSH_AXIS[a]

        def weight(x):
            return basis(x[..., TANGENT_AXIS[a]]) * model.profile(side, x)[..., None]

        if weights == "interpolated":
            w_lat = weight(xl)                                   # (m, nl, nc)
            w_q = np.einsum("ql,elk->eqk", Phi, w_lat)
            # derivative weights sum to zero, so shifting by one lattice value keeps constants exact
            dref = np.einsum("qlr,elk->eqkr", dPhi, w_lat - w_lat[:, :1])
            # chain rule through the affine map: grad = d/dxi * grad(l1) + d/deta * grad(l2)
            dw_q = dref[..., 0] * grad[:, None, None, 1, d] + dref[..., 1] * grad[:, None, None, 2, d]
            w_e = np.einsum("gl,elk->egk", Phi_e, weight(xel))
        else:
            psi_q = basis(xq[..., TANGENT_AXIS[a]])
            w_q = psi_q * model.profile(side, xq)[..., None]
            dw_q = psi_q * model.profile_derivative(side, xq)[..., None]
            w_e = weight(xe)

        # int w phi_i over each element, times the constant d phi_j / dx_d
        w_phi = area[:, None, None] * np.einsum("q,eqk,qi->eki", wq, w_q, bary)
        B_loc = w_phi[..., :, None] * grad[:, None, None, :, d]
        C_loc = area[:, None, None, None] * np.einsum("q,eqk,qij->ekij", wq, dw_q, phiphi)
        L_loc = -(elen * normals[:, d])[:, None, None, None] * np.einsum(
            "g,egk,gi,gj->ekij", we, w_e, phie, phie
        )
        for k in range(nc):
            B_data[a, k] = _scatter(keys, n, ri, ci, B_loc[:, k])
            C_data[a, k] = _scatter(keys, n, ri, ci, C_loc[:, k])
            L_data[a, k] = _scatter(keys, n, eri, eci, L_loc[:, k])

    return OperatorSet(
        mesh=mesh,
        basis=basis,
        model=model,
        mu=float(mu),
        quad_order=int(quad_order),
        weights=weights,
        indptr=indptr,
        indices=cols,
        rows=rows,
        M_data=M_data,
        A_data=A_data,
        B_data=B_data,
        C_data=C_data,
        L_data=L_data,
    )


def _lattice(degree: int) -> np.ndarray:
    """Equispaced lattice on the reference triangle, (n, 2) in (xi, eta)."""
    return np.array(
        [(i / degree, j / degree) for j in range(degree + 1) for i in range(degree + 1 - j)]
    )


def _monomials(xy: np.ndarray, degree: int):
    # centred at the barycentre to keep the Vandermonde matrix well conditioned
    xi, eta = xy[:, 0] - 1.0 / 3.0, xy[:, 1] - 1.0 / 3.0
    powers = [(p, q) for q in range(degree + 1) for p in range(degree + 1 - q)]
    val = np.column_stack([xi**p * eta**q for p, q in powers])
    dxi = np.column_stack([p * xi ** max(p - 1, 0) * eta**q for p, q in powers])
    deta = np.column_stack([q * xi**p * eta ** max(q - 1, 0) for p, q in powers])
    return val, dxi, deta


def _lagrange_2d(lattice: np.ndarray, ref_points: np.ndarray):
    degree = int(round(1.0 / lattice[1, 0])) if len(lattice) > 1 else 0
    V, _, _ = _monomials(lattice, degree)
    val, dxi, deta = _monomials(ref_points, degree)
    # rows of each result are the Lagrange basis values at one point
    solve = lambda rhs: np.linalg.solve(V.T, rhs.T).T  # noqa: E731
    return solve(val), np.stack([solve(dxi), solve(deta)], axis=-1)


def _lagrange_1d(nodes: np.ndarray, points: np.ndarray) -> np.ndarray:
    V = np.vander(nodes - 0.5, increasing=True)
    return np.linalg.solve(V.T, np.vander(points - 0.5, len(nodes), increasing=True).T).T


def signed_combination(data: np.ndarray, u_instant) -> np.ndarray:
    """``sum_{a,k} s_a u_{a,k} data[a,k]`` with the side signs of the velocity field."""
    coeffs = SIDE_SIGN[:, None] * np.asarray(u_instant, dtype=float)
    return np.tensordot(coeffs, data, axes=([0, 1], [0, 1]))


def project_density(mesh: Mesh, M, f) -> np.ndarray:
    """Interpolate the density ``f`` at the nodes and rescale to unit mass.

    ``f`` maps an (n, 2) array of points to n values.
    """
    nodal = np.asarray(f(mesh.nodes), dtype=float).reshape(-1)
    if nodal.shape != (mesh.n_nodes,):
        raise ValueError("density function must return one value per node")
    if np.any(~np.isfinite(nodal)):
        raise ValueError("density function returned non-finite values")
    if np.any(nodal < 0):
        raise ValueError("density must be non-negative")
    mass = float(np.sum(M @ nodal))
    if not mass > 0:
        raise ValueError("density interpolates to the zero vector")
    return nodal / mass


def total_mass(M, q) -> float:
    return float(np.sum(M @ q))


def export_coo(path, matrix) -> None:
    """Write ``matrix`` as ``row col value`` lines (zero-based indices)."""
    coo = sp.coo_matrix(matrix)
    with open(path, "w", newline="\n") as fh:
        fh.write("row col value\n")
        for r, c, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{r} {c} {v:.17g}\n")
