"""Discrete cost, adjoint-based reduced gradient and the box-constrained optimizer."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .actuation import N_SIDES, SIDE_SIGN, ControlTrajectory, trapezoid_weights
from .assembly import OperatorSet
from .solver import AdjointTrajectory, StateTrajectory, Stepper, solve_adjoint_dto, solve_forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CostBreakdown:
    terminal: float
    control: float

    @property
    def total(self) -> float:
        return self.terminal + self.control


def control_cost(ctrl: ControlTrajectory, alpha: float) -> float:
    """Trapezoidal ``alpha/2 * int |u(t)|^2 dt`` over the coefficient vectors."""
    sq = np.sum(ctrl.values**2, axis=(1, 2))
    return 0.5 * alpha * float(trapezoid_weights(ctrl.n_steps, ctrl.dt) @ sq)


def cost(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, qT, alpha: float) -> CostBreakdown:
    if Q.values.shape != (ctrl.n_steps + 1, ops.n_nodes):
        raise ValueError("state trajectory does not match the control trajectory")
    qT = np.asarray(qT, dtype=float)
    if qT.shape != (ops.n_nodes,):
        raise ValueError(f"target density must have {ops.n_nodes} entries")
    e = Q.final - qT
    return CostBreakdown(terminal=0.5 * float(e @ (ops.M @ e)), control=control_cost(ctrl, alpha))


def _pairings(ops: OperatorSet, data: np.ndarray, left: np.ndarray, right: np.ndarray) -> np.ndarray:
    """``left_i^T X_{a,k} right_i`` for every row i and every matrix in ``data``.

    Returns shape (rows, 4, N_c).
    """
    prod = left[:, ops.rows] * right[:, ops.indices]
    out = prod @ data.reshape(-1, ops.nnz).T
    return out.reshape(len(left), N_SIDES, ops.n_basis)


def gradient_from_trajectories(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, P: AdjointTrajectory, alpha: float) -> np.ndarray:
    """Exact derivative of the discrete Lagrangian with respect to every coefficient.

    Component ``(i, a, k)`` is
    ``w_i alpha u_{i,a,k} - dt s_a / 2 * (p_i + p_{i+1})^T G_{a,k} q_i``
    where ``w_i`` are the trapezoidal weights, ``G = B + C + L``, ``p_0`` and
    ``p_{N+1}`` are taken as zero, and ``s_a`` is the side sign.  When
    ``B + B^T + C + L = 0`` this equals the transport form
    ``dt (alpha u + s_a q_i^T B_{a,k} (p_i + p_{i+1}) / 2)`` at interior instants.
    """
    if P.first_index != 1:
        raise ValueError("the reduced gradient needs the discrete (DtO) adjoint")
    N = ctrl.n_steps
    dt = ctrl.dt
    W = np.zeros((N + 1, ops.n_nodes))
    W[1:] += P.values
    W[:-1] += P.values
    pair = _pairings(ops, ops.G_data, W, Q.values)
    w = trapezoid_weights(N, dt)
    grad = alpha * w[:, None, None] * ctrl.values - 0.5 * dt * SIDE_SIGN[None, :, None] * pair
    return grad.reshape(-1)


def gradient_transport_form(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, P: AdjointTrajectory, alpha: float) -> np.ndarray:
    """Reduced gradient written with the transport matrices ``B`` only.

    Relies on ``G^T = -B``; agrees with :func:`gradient_from_trajectories`
    to the size of the ``B + B^T + C + L`` residual.
    """
    N = ctrl.n_steps
    W = np.zeros((N + 1, ops.n_nodes))
    W[1:] += P.values
    W[:-1] += P.values
    pair = _pairings(ops, ops.B_data, Q.values, W)
    w = trapezoid_weights(N, ctrl.dt)
    grad = alpha * w[:, None, None] * ctrl.values + 0.5 * ctrl.dt * SIDE_SIGN[None, :, None] * pair
    return grad.reshape(-1)


@dataclass
class Evaluation:
    cost: CostBreakdown
    gradient: np.ndarray | None
    state: StateTrajectory
    adjoint: AdjointTrajectory | None


def evaluate(ops: OperatorSet, ctrl: ControlTrajectory, q0, qT, alpha: float, gradient: bool = True, method: str = "direct") -> Evaluation:
    """Forward solve, cost and (optionally) adjoint solve plus gradient."""
    st = Stepper(ops, ctrl, method=method)
    Q = solve_forward(ops, ctrl, q0, stepper=st)
    c = cost(ops, ctrl, Q, qT, alpha)
    if not gradient:
        return Evaluation(c, None, Q, None)
    P = solve_adjoint_dto(ops, ctrl, Q, qT, stepper=st)
    return Evaluation(c, gradient_from_trajectories(ops, ctrl, Q, P, alpha), Q, P)


def reduced_gradient(ops: OperatorSet, ctrl: ControlTrajectory, q0, qT, alpha: float, method: str = "direct") -> np.ndarray:
    """Gradient of the reduced discrete cost, flattened like :meth:`ControlTrajectory.flatten`."""
    return evaluate(ops, ctrl, q0, qT, alpha, method=method).gradient


@dataclass
class OptimizerSettings:
    tol_g: float | None = None      # default 1e-6 * (1 + |J0|)
    tol_f: float = 1e-9
    patience: int = 5
    max_iters: int = 500
    armijo: float = 1e-4
    max_backtracks: int = 40
    step_min: float = 1e-12
    step_max: float = 1e12


@dataclass
class IterationRecord:
    iteration: int
    cost: float
    terminal: float
    control: float
    pg_norm: float
    step: float
    evaluations: int


@dataclass
class OptResult:
    control: ControlTrajectory
    history: list[IterationRecord]
    iterations: int
    status: str  # "converged" | "max-iters" | "stalled"
    cost: CostBreakdown
    state: StateTrajectory
    elapsed: float = 0.0
    message: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def relative_reduction(self) -> float:
        j0 = self.history[0].cost
        return 1.0 - self.cost.total / j0 if j0 > 0 else 0.0


def project(U: np.ndarray, u_max: float) -> np.ndarray:
    return np.clip(U, 0.0, u_max)


def optimize(ops: OperatorSet, q0, qT, alpha: float, u_max: float, initial_guess: ControlTrajectory,
             settings: OptimizerSettings | None = None, method: str = "direct", callback=None) -> OptResult:
    """Minimize the reduced cost over ``0 <= U <= u_max``.

    Projected gradient descent: a Barzilai-Borwein step proposes a trial point,
    which is projected onto the box, and Armijo backtracking along the projected
    direction enforces monotone decrease.
    """
    s = settings or OptimizerSettings()
    dt, nb = initial_guess.dt, initial_guess.n_basis
    t0 = time.perf_counter()

    def run(U):
        ctrl = ControlTrajectory.from_flat(U, nb, dt)
        return ctrl, evaluate(ops, ctrl, q0, qT, alpha, method=method)

    U = project(initial_guess.flatten(), u_max)
    ctrl, ev = run(U)
    n_eval = 1
    f, g = ev.cost.total, ev.gradient
    tol_g = s.tol_g if s.tol_g is not None else 1e-6 * (1.0 + abs(f))
    history: list[IterationRecord] = []
    U_prev = g_prev = None
    lam = None
    status, message = "max-iters", ""
    step = 0.0

    for it in range(s.max_iters + 1):
        pg = project(U - g, u_max) - U
        pg_norm = float(np.max(np.abs(pg))) if pg.size else 0.0
        history.append(IterationRecord(it, f, ev.cost.terminal, ev.cost.control, pg_norm, step, n_eval))
        if callback is not None:
            callback(history[-1])
        log.debug("iter %d  J=%.6e  pg=%.3e  step=%.3e", it, f, pg_norm, step)
        if pg_norm <= tol_g:
            status = "converged"
            break
        if it >= s.patience:
            f_old = history[-1 - s.patience].cost
            if f_old - f <= s.tol_f * max(abs(f_old), np.finfo(float).tiny):
                status, message = "stalled", "relative cost decrease below tol_f"
                break
        if it == s.max_iters:
            break

        if U_prev is None:
            gmax = float(np.max(np.abs(g)))
            lam = u_max / gmax
        else:
            sv, yv = U - U_prev, g - g_prev
            sy = float(sv @ yv)
            lam = float(sv @ sv) / sy if sy > 0 else s.step_max
        lam = float(np.clip(lam, s.step_min, s.step_max))

        d = project(U - lam * g, u_max) - U
        slope = float(g @ d)
        t = 1.0
        accepted = False
        for _ in range(s.max_backtracks):
            U_try = U + t * d
            ctrl_try, ev_try = run(U_try)
            n_eval += 1
            f_try = ev_try.cost.total
            if f_try <= f + s.armijo * t * slope and f_try < f:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            status, message = "stalled", "line search failed to decrease the cost"
            break
        U_prev, g_prev = U, g
        U, ctrl, ev = U_try, ctrl_try, ev_try
        f, g = ev.cost.total, ev.gradient
        step = t * lam

    return OptResult(
        control=ctrl,
        history=history,
        iterations=len(history) - 1,
        status=status,
        cost=ev.cost,
        state=ev.state,
        elapsed=time.perf_counter() - t0,
        message=message,
    )
