"""Numerical monitors for the structural identities, energy bounds and gradients."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .actuation import (
    SIDE_SIGN,
    ControlTrajectory,
    control_norm_sq,
    trapezoid_weights,
    velocity_norm_sq,
    velocity_sup_norm,
)
from .assembly import OperatorSet, signed_combination
from .ocp import _pairings, evaluate
from .solver import StateTrajectory, solve_adjoint_otd, solve_tangent

#: relative slack on analytic bounds to absorb roundoff in the discrete norms
BOUND_SLACK = 1e-12


@dataclass
class EnergyCheck:
    name: str
    lhs: float
    rhs: float

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs * (1.0 + BOUND_SLACK))


@dataclass
class DiagnosticsReport:
    bcl_residuals: np.ndarray | None = None
    bcl_scale: float | None = None
    commutation_residual: float | None = None
    commutation_scale: float | None = None
    velocity_bound_lhs: float | None = None
    velocity_bound_rhs: float | None = None
    lambda_t: np.ndarray | None = None
    alpha0_bar: float | None = None
    control_norm_sq: float | None = None
    energy_checks: list[EnergyCheck] = field(default_factory=list)
    gradient_fd_error: float | None = None
    tangent_adjoint_error: float | None = None
    mass_drift: float | None = None

    def merge(self, other: "DiagnosticsReport") -> "DiagnosticsReport":
        out = DiagnosticsReport(**self.__dict__)
        for k, v in other.__dict__.items():
            if k == "energy_checks":
                out.energy_checks = list(self.energy_checks) + list(v)
            elif v is not None:
                setattr(out, k, v)
        return out

    @property
    def velocity_bound_passed(self) -> bool | None:
        if self.velocity_bound_lhs is None:
            return None
        return self.velocity_bound_lhs <= self.velocity_bound_rhs * (1.0 + BOUND_SLACK)

    def flags(self, bcl_tol: float = 1e-8, grad_tol: float = 1e-6, duality_tol: float = 1e-8) -> dict[str, bool]:
        """Pass/fail for every filled quantity."""
        f: dict[str, bool] = {}
        if self.bcl_residuals is not None:
            f["bcl"] = bool(np.max(self.bcl_residuals) <= bcl_tol * max(self.bcl_scale or 1.0, 1e-300))
        if self.commutation_residual is not None:
            f["commutation"] = bool(self.commutation_residual <= 2 * bcl_tol * max(self.commutation_scale or 1.0, 1e-300))
        if self.velocity_bound_lhs is not None:
            f["velocity_bound"] = bool(self.velocity_bound_passed)
        for chk in self.energy_checks:
            f[chk.name] = chk.passed
        if self.gradient_fd_error is not None:
            f["gradient_fd"] = self.gradient_fd_error <= grad_tol
        if self.tangent_adjoint_error is not None:
            f["tangent_adjoint"] = self.tangent_adjoint_error <= duality_tol
        return f

    def to_text(self, **tols) -> str:
        lines = []

        def put(key, val):
            if val is None:
                return
            if isinstance(val, float):
                val = f"{val:.6e}"
            lines.append(f"{key}: {val}")

        if self.bcl_residuals is not None:
            put("bcl_residual_max", float(np.max(self.bcl_residuals)))
            put("bcl_scale", self.bcl_scale)
        put("commutation_residual", self.commutation_residual)
        put("commutation_scale", self.commutation_scale)
        put("mass_drift", self.mass_drift)
        put("velocity_bound_lhs", self.velocity_bound_lhs)
        put("velocity_bound_rhs", self.velocity_bound_rhs)
        put("control_norm_sq", self.control_norm_sq)
        put("alpha0_bar", self.alpha0_bar)
        for chk in self.energy_checks:
            put(f"{chk.name}_lhs", chk.lhs)
            put(f"{chk.name}_rhs", chk.rhs)
        put("gradient_fd_error", self.gradient_fd_error)
        put("tangent_adjoint_error", self.tangent_adjoint_error)
        for k, v in self.flags(**tols).items():
            lines.append(f"pass_{k}: {str(v).lower()}")
        return "\n".join(lines) + "\n"

    def series_csv(self, dt: float | None = None) -> str:
        """Per-instant series (currently ``lambda_t``) as CSV text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "t", "lambda"])
        if self.lambda_t is not None:
            for i, lam in enumerate(self.lambda_t):
                w.writerow([i, "" if dt is None else f"{i * dt:.10g}", f"{lam:.10e}"])
        return buf.getvalue()


def _transpose_data(ops: OperatorSet, data: np.ndarray) -> np.ndarray:
    return data[..., ops.transpose_perm]


def check_structure(ops: OperatorSet, sample_controls) -> DiagnosticsReport:
    """Residuals of ``B + B^T + C + L = 0`` and of ``Gamma_q(u)^T = Gamma_p(u)``.

    Scales are the largest entry of ``B`` (for the residuals) and of
    ``Gamma_q(u)`` over the samples (for the commutation).
    """
    comm = 0.0
    comm_scale = 0.0
    for u in sample_controls:
        gq = signed_combination(ops.G_data, u)
        gp = -signed_combination(ops.B_data, u)
        comm = max(comm, float(np.max(np.abs(_transpose_data(ops, gq) - gp))))
        comm_scale = max(comm_scale, float(np.max(np.abs(gq))))
    return DiagnosticsReport(
        bcl_residuals=ops.structure_residual(),
        bcl_scale=float(np.max(np.abs(ops.B_data))),
        commutation_residual=comm,
        commutation_scale=comm_scale,
    )


def _safe_exp(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _mul(a: float, b: float) -> float:
    # inf * 0 would be nan; a vanishing factor keeps the bound at zero
    if a == 0.0 or b == 0.0:
        return 0.0
    return a * b


def check_energy(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, mu: float, n_samples: int = 64) -> DiagnosticsReport:
    """Discrete counterparts of the three energy estimates and the velocity bound.

    * ``max_i |q_i|^2 <= exp(16/mu |u|^2) |q_0|^2``
    * ``sum_i w_i |q_i|^2 <= T exp(16/mu |u|^2) |q_0|^2``
    * ``sum_i w_i |q_i|_{H1}^2 <= (1/2 + 8/mu |u|^2 exp(16/mu |u|^2)) |q_0|^2 / alpha0``

    with ``|u|^2`` the squared control-space norm, ``alpha0 = min_t min(mu/2,
    |v|^2/(2 mu))`` and the H1 norm evaluated as ``q^T (M + A/mu) q``.
    When ``alpha0`` vanishes the last bound is infinite.
    """
    if mu <= 0:
        raise ValueError("mu must be positive")
    basis, model = ops.basis, ops.model
    M, A = ops.M, ops.A
    q = Q.values
    l2 = np.einsum("ij,ij->i", q, (M @ q.T).T)
    h1 = l2 + np.einsum("ij,ij->i", q, (A @ q.T).T) / mu
    w = trapezoid_weights(ctrl.n_steps, ctrl.dt)
    T = ctrl.n_steps * ctrl.dt

    vsup = np.array([velocity_sup_norm(u, basis, model, n_samples) for u in ctrl.values])
    lam = vsup**2 / mu
    alpha0 = float(np.min(np.minimum(mu / 2.0, vsup**2 / (2.0 * mu))))
    unorm = control_norm_sq(ctrl, basis, n_samples)
    growth = _safe_exp(16.0 / mu * unorm)
    q0n = float(l2[0])

    rhs_c = math.inf if alpha0 == 0.0 else (0.5 + _mul(8.0 / mu * unorm, growth)) * q0n / alpha0
    checks = [
        EnergyCheck("energy_linf_l2", float(np.max(l2)), _mul(growth, q0n)),
        EnergyCheck("energy_l2_l2", float(w @ l2), _mul(T * growth, q0n)),
        EnergyCheck("energy_l2_h1", float(w @ h1), rhs_c),
    ]
    mass = q @ (M @ np.ones(ops.n_nodes))
    return DiagnosticsReport(
        velocity_bound_lhs=velocity_norm_sq(ctrl, basis, model, n_samples),
        velocity_bound_rhs=8.0 * unorm,
        lambda_t=lam,
        alpha0_bar=alpha0,
        control_norm_sq=unorm,
        energy_checks=checks,
        mass_drift=float(np.max(np.abs(mass - mass[0]))),
    )


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), 1e-12)


def check_gradients(ops: OperatorSet, q0, qT, alpha: float, ctrl: ControlTrajectory, n_probes: int = 10,
                    eps: float = 1e-5, seed: int = 0) -> DiagnosticsReport:
    """Directional central differences and tangent/adjoint duality along random directions.

    Both errors are the largest relative discrepancy over the probes, measured
    against the adjoint-based directional derivative.
    """
    ev = evaluate(ops, ctrl, q0, qT, alpha)
    g = ev.gradient
    U = ctrl.flatten()
    nb, dt = ctrl.n_basis, ctrl.dt
    rng = np.random.default_rng(seed)
    w = trapezoid_weights(ctrl.n_steps, dt)
    e = ev.state.final - np.asarray(qT, dtype=float)
    fd_err = 0.0
    dual_err = 0.0

    def J(V):
        return evaluate(ops, ControlTrajectory.from_flat(V, nb, dt), q0, qT, alpha, gradient=False).cost.total

    for _ in range(n_probes):
        h = rng.uniform(-1.0, 1.0, U.size)
        gh = float(g @ h)
        fd = (J(U + eps * h) - J(U - eps * h)) / (2 * eps)
        fd_err = max(fd_err, _rel(gh, fd))
        H = h.reshape(ctrl.values.shape)
        Z = solve_tangent(ops, ctrl, ev.state, ControlTrajectory(H, dt))
        reg = alpha * float(np.sum(w[:, None, None] * ctrl.values * H))
        dual_err = max(dual_err, _rel(gh - reg, float(e @ (ops.M @ Z.final))))
    return DiagnosticsReport(gradient_fd_error=fd_err, tangent_adjoint_error=dual_err)


def fd_gradient(ops: OperatorSet, q0, qT, alpha: float, ctrl: ControlTrajectory, eps: float = 1e-5) -> np.ndarray:
    """Componentwise central-difference gradient of the reduced cost."""
    U = ctrl.flatten()
    nb, dt = ctrl.n_basis, ctrl.dt
    out = np.empty_like(U)
    for j in range(U.size):
        d = np.zeros_like(U)
        d[j] = eps
        jp = evaluate(ops, ControlTrajectory.from_flat(U + d, nb, dt), q0, qT, alpha, gradient=False).cost.total
        jm = evaluate(ops, ControlTrajectory.from_flat(U - d, nb, dt), q0, qT, alpha, gradient=False).cost.total
        out[j] = (jp - jm) / (2 * eps)
    return out


@dataclass
class RefinementLevel:
    n_steps: int
    gradient_gap: float   # max over instants/sides/bases of the gradient-density difference
    pairing_gap: float    # difference of the directional derivatives along the smooth direction
    adjoint_gap: float    # max nodal difference of the adjoints at shared instants


def otd_gradient_density(ops: OperatorSet, ctrl: ControlTrajectory, Q: StateTrajectory, P, alpha: float) -> np.ndarray:
    """Pointwise-in-time reduced gradient ``alpha u_i + s_a q_i^T B_{a,k} p_i`` from the OtD adjoint."""
    return alpha * ctrl.values + SIDE_SIGN[None, :, None] * _pairings(ops, ops.B_data, Q.values, P.values)


def dto_otd_study(ops: OperatorSet, q0, qT, alpha: float, u_of_t, h_of_t, T: float, levels) -> list[RefinementLevel]:
    """Compare discrete-adjoint and discretized-continuous-adjoint gradients under time refinement.

    ``u_of_t`` and ``h_of_t`` map a time to a (4, N_c) coefficient array.
    """
    out = []
    for N in levels:
        dt = T / N
        ts = dt * np.arange(N + 1)
        ctrl = ControlTrajectory(np.stack([u_of_t(t) for t in ts]), dt)
        H = np.stack([h_of_t(t) for t in ts])
        ev = evaluate(ops, ctrl, q0, qT, alpha)
        P = solve_adjoint_otd(ops, ctrl, ev.state, qT)
        w = trapezoid_weights(N, dt)
        g_dto = ev.gradient.reshape(ctrl.values.shape)
        g_otd = otd_gradient_density(ops, ctrl, ev.state, P, alpha)
        out.append(RefinementLevel(
            n_steps=N,
            gradient_gap=float(np.max(np.abs(g_dto / w[:, None, None] - g_otd))),
            pairing_gap=abs(float(np.sum(g_dto * H)) - float(np.sum(w[:, None, None] * g_otd * H))),
            adjoint_gap=float(np.max(np.abs(P.values[1:] - ev.adjoint.values))),
        ))
    return out


def observed_orders(gaps) -> np.ndarray:
    """``log2`` ratios of successive errors under halving of the step."""
    g = np.asarray(gaps, dtype=float)
    return np.log2(g[:-1] / g[1:])
