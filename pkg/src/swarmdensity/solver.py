"""Crank-Nicolson state, adjoint and tangent sweeps for the bilinear FEM system

    M q' + (A + Gamma_q(u)) q = 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .actuation import ControlTrajectory
from .assembly import OperatorSet, signed_combination

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SolverError(RuntimeError):
    def __init__(self, message: str, step: int | None = None):
        self.step = step
        super().__init__(message if step is None else f"time index {step}: {message}")


@dataclass
class StateTrajectory:
    values: np.ndarray  # (N+1, N_q), row i is q_i
    dt: float

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]

    def flatten(self) -> np.ndarray:
        return self.values.reshape(-1).copy()


@dataclass
class AdjointTrajectory:
    """Adjoint vectors ``p_i`` for ``i = first_index .. N``.

    The discrete adjoint has ``first_index = 1``; the optimize-then-discretize
    adjoint is also defined at ``i = 0``.
    """

    values: np.ndarray
    dt: float
    first_index: int = 1

    def at(self, i: int) -> np.ndarray:
        return self.values[i - self.first_index]

    def flatten(self) -> np.ndarray:
        return self.values.reshape(-1).copy()


def gamma_q(ops: OperatorSet, u_instant):
    """State coupling matrix, linear in the coefficients of one time instant."""
    return ops.matrix(signed_combination(ops.G_data, u_instant))


def gamma_p(ops: OperatorSet, u_instant):
    """Adjoint coupling matrix built from the transport matrices only."""
    return ops.matrix(-signed_combination(ops.B_data, u_instant))


def _check_instant(ops: OperatorSet, u_instant):
    u_instant = np.asarray(u_instant, dtype=float)
    if u_instant.shape != (4, ops.n_basis):
        raise ValueError(f"expected coefficients of shape (4, {ops.n_basis}), got {u_instant.shape}")
    return u_instant


def transition(ops: OperatorSet, u_instant, dt: float, sign: int, adjoint: bool = False):
    """``M/dt + sign/2 (A + Gamma(u))`` with the state (default) or adjoint coupling."""
    u_instant = _check_instant(ops, u_instant)
    if adjoint:
        coupling = -signed_combination(ops.B_data, u_instant)
    else:
        coupling = signed_combination(ops.G_data, u_instant)
    return ops.matrix(ops.M_data / dt + 0.5 * sign * (ops.A_data + coupling))


class Stepper:
    """Factorizes and caches the implicit matrices ``A+(u_i)`` of one control trajectory.

    ``method="direct"`` uses a sparse LU per instant.  ``method="bicgstab"``
    solves iteratively, preconditioned by a fixed LU of ``M/dt + A/2``.
    """

    def __init__(self, ops: OperatorSet, ctrl: ControlTrajectory, method: str = "direct", rtol: float = RESIDUAL_TOL):
        if ctrl.n_basis != ops.n_basis:
            raise ValueError(f"control has {ctrl.n_basis} basis functions, operators have {ops.n_basis}")
        if ctrl.n_steps < 1:
            raise ValueError("control trajectory needs at least one time step")
        if method not in ("direct", "bicgstab"):
            raise ValueError(f"unknown linear solver {method!r}")
        self.ops = ops
        self.ctrl = ctrl
        self.dt = ctrl.dt
        self.method = method
        self.rtol = rtol
        self._plus: dict[int, object] = {}
        self._lu: dict[int, object] = {}
        self._precond = None

    def plus(self, i: int):
        if i not in self._plus:
            self._plus[i] = transition(self.ops, self.ctrl.values[i], self.dt, +1).tocsc()
        return self._plus[i]

    def minus(self, i: int):
        return transition(self.ops, self.ctrl.values[i], self.dt, -1)

    def _factor(self, i: int):
        if i not in self._lu:
            try:
                self._lu[i] = spla.splu(self.plus(i))
            except RuntimeError as exc:
                raise SolverError(f"factorization failed: {exc}", step=i) from exc
        return self._lu[i]

    def _preconditioner(self):
        if self._precond is None:
            ops = self.ops
            P = ops.matrix(ops.M_data / self.dt + 0.5 * ops.A_data).tocsc()
            self._precond = spla.splu(P)
        return self._precond

    def solve_plus(self, i: int, rhs: np.ndarray, transpose: bool = False) -> np.ndarray:
        """Solve ``A+(u_i) x = rhs`` (or its transpose)."""
        A = self.plus(i)
        if self.method == "direct":
            x = self._factor(i).solve(rhs, trans="T" if transpose else "N")
        else:
            pre = self._preconditioner()
            op = A.T if transpose else A
            Mop = spla.LinearOperator(A.shape, lambda v: pre.solve(v, trans="T" if transpose else "N"))
            x, info = spla.bicgstab(op, rhs, rtol=0.1 * self.rtol, atol=0.0, M=Mop, maxiter=1000)
            if info != 0:
                raise SolverError(f"BiCGStab did not converge (info={info})", step=i)
        self._check(A.T if transpose else A, x, rhs, i)
        return x

    def _check(self, A, x, rhs, i):
        nb = np.linalg.norm(rhs)
        if not np.all(np.isfinite(x)):
            raise SolverError("singular system (non-finite solution)", step=i)
        res = np.linalg.norm(A @ x - rhs)
        if res > self.rtol * nb:
            raise SolverError(f"relative residual {res / max(nb, 1e-300):.3e} exceeds {self.rtol:.1e}", step=i)


def _stepper(ops, ctrl, stepper, method):
    if stepper is None:
        return Stepper(ops, ctrl, method=method)
    if stepper.ctrl is not ctrl or stepper.ops is not ops:
        raise ValueError("stepper was built for a different control or operator set")
    return stepper


def solve_forward(ops: OperatorSet, ctrl: ControlTrajectory, q0, stepper: Stepper | None = None, method: str = "direct") -> StateTrajectory:
    """March ``A+(u_{i+1}) q_{i+1} = A-(u_i) q_i`` from ``q_0 = q0``."""
    st = _stepper(ops, ctrl, stepper, method)
    q0 = np.asarray(q0, dtype=float)
    if q0.shape != (ops.n_nodes,):
        raise ValueError(f"initial density must have {ops.n_nodes} entries")
    N = ctrl.n_steps
    Q = np.empty((N + 1, ops.n_nodes))
    Q[0] = q0
    for i in range(N):
        Q[i + 1] = st.solve_plus(i + 1, st.minus(i) @ Q[i])
    return StateTrajectory(Q, ctrl.dt)


def _check_state(ops, ctrl, Q: StateTrajectory, qT):
    if Q.values.shape != (ctrl.n_steps + 1, ops.n_nodes):
        raise ValueError("state trajectory does not match the control trajectory")
    qT = np.asarray(qT, dtype=float)
    if qT.shape != (ops.n_nodes,):
        raise ValueError(f"target density must have {ops.n_nodes} entries")
    return qT


def solve_adjoint_dto(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, qT, stepper: Stepper | None = None, method: str = "direct") -> AdjointTrajectory:
    """Discrete adjoint of the Crank-Nicolson recurrence.

    ``A+(u_N)^T p_N = M (q_N - qT) / dt`` and
    ``A+(u_i)^T p_i = A-(u_i)^T p_{i+1}`` for ``i = N-1 .. 1``.
    """
    st = _stepper(ops, ctrl, stepper, method)
    qT = _check_state(ops, ctrl, Q, qT)
    N = ctrl.n_steps
    P = np.empty((N, ops.n_nodes))
    P[N - 1] = st.solve_plus(N, ops.M @ (Q.values[N] - qT) / ctrl.dt, transpose=True)
    for i in range(N - 1, 0, -1):
        P[i - 1] = st.solve_plus(i, st.minus(i).T @ P[i], transpose=True)
    return AdjointTrajectory(P, ctrl.dt, first_index=1)


def solve_adjoint_otd(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, qT, method: str = "direct") -> AdjointTrajectory:
    """Crank-Nicolson discretisation of the continuous adjoint equation.

    ``p_N = q_N - qT`` and ``Ahat+(u_i) p_i = Ahat-(u_{i+1}) p_{i+1}`` for
    ``i = N-1 .. 0``, where ``Ahat`` uses the adjoint coupling ``Gamma_p``.
    """
    qT = _check_state(ops, ctrl, Q, qT)
    N = ctrl.n_steps
    dt = ctrl.dt
    P = np.empty((N + 1, ops.n_nodes))
    P[N] = Q.values[N] - qT
    for i in range(N - 1, -1, -1):
        lhs = transition(ops, ctrl.values[i], dt, +1, adjoint=True).tocsc()
        rhs = transition(ops, ctrl.values[i + 1], dt, -1, adjoint=True) @ P[i + 1]
        if method == "direct":
            try:
                P[i] = spla.spsolve(lhs, rhs)
            except RuntimeError as exc:
                raise SolverError(str(exc), step=i) from exc
        else:
            P[i], info = spla.bicgstab(lhs, rhs, rtol=0.1 * RESIDUAL_TOL, atol=0.0)
            if info != 0:
                raise SolverError(f"BiCGStab did not converge (info={info})", step=i)
        nb = np.linalg.norm(rhs)
        if np.linalg.norm(lhs @ P[i] - rhs) > RESIDUAL_TOL * nb and nb > 0:
            raise SolverError("adjoint solve residual too large", step=i)
    return AdjointTrajectory(P, dt, first_index=0)


def solve_tangent(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, direction: ControlTrajectory, stepper: Stepper | None = None, method: str = "direct") -> StateTrajectory:
    """Derivative of the state trajectory along ``direction``.

    Differentiating the recurrence gives ``z_0 = 0`` and
    ``A+(u_{i+1}) z_{i+1} = A-(u_i) z_i - Gamma_q(h_{i+1}) q_{i+1}/2 - Gamma_q(h_i) q_i/2``.
    """
    st = _stepper(ops, ctrl, stepper, method)
    if direction.values.shape != ctrl.values.shape:
        raise ValueError("direction must have the same shape as the control")
    N = ctrl.n_steps
    H = direction.values
    Z = np.zeros((N + 1, ops.n_nodes))
    q = Q.values
    for i in range(N):
        rhs = st.minus(i) @ Z[i] - 0.5 * (gamma_q(ops, H[i + 1]) @ q[i + 1] + gamma_q(ops, H[i]) @ q[i])
        Z[i + 1] = st.solve_plus(i + 1, rhs)
    return StateTrajectory(Z, ctrl.dt)
