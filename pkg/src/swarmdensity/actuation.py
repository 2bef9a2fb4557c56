"""Boundary actuators, their spatial basis and the velocity field they induce.

Each side ``a`` of the square carries an actuator whose intensity along the
side is ``u_a(s, t) = sum_k psi_k(s) u_{a,k}(t)``.  The actuator pushes
particles orthogonally to its side with an intensity that decays as
``exp(-c * distance)``:

=====  ==========  =========  ============  ===========
side   tangential  velocity   decay         push
=====  ==========  =========  ============  ===========
1      x1          v2         e^{-c x2}     +x2
2      x2          v1         e^{-c(1-x1)}  -x1
3      x1          v2         e^{-c(1-x2)}  -x2
4      x2          v1         e^{-c x1}     +x1
=====  ==========  =========  ============  ===========
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_SIDES = 4
#: coordinate the side basis functions are evaluated on
TANGENT_AXIS = np.array([0, 1, 0, 1])
#: velocity component each side drives
PUSH_AXIS = np.array([1, 0, 1, 0])
#: sign of each side's contribution to the velocity field
SIDE_SIGN = np.array([1.0, -1.0, -1.0, 1.0])
#: sides whose decay is measured from the far wall, e^{-c(1-x)}
_FAR_SIDE = np.array([False, True, True, False])


@dataclass(frozen=True)
class ControlBasis:
    """One-dimensional basis ``psi_k`` shared by all four actuators.

    ``kind="gaussian"`` uses radial basis functions centred at ``(k-1/2)/n``
    with width ``sigma`` (default ``1/n``); ``kind="constant"`` sets every
    ``psi_k`` to one, which makes all FEM integrands polynomial when ``c=0``.
    """

    n_basis: int
    width: float | None = None
    kind: str = "gaussian"

    def __post_init__(self):
        if self.n_basis < 1:
            raise ValueError("n_basis must be at least 1")
        if self.kind not in ("gaussian", "constant"):
            raise ValueError(f"unknown basis kind {self.kind!r}")
        if self.width is not None and self.width <= 0:
            raise ValueError("basis width must be positive")

    @property
    def sigma(self) -> float:
        return 1.0 / self.n_basis if self.width is None else float(self.width)

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(self.n_basis) + 0.5) / self.n_basis

    def __call__(self, s) -> np.ndarray:
        """Values ``psi_k(s)`` with shape ``s.shape + (n_basis,)``."""
        s = np.asarray(s, dtype=float)
        if self.kind == "constant":
            return np.ones(s.shape + (self.n_basis,))
        d = s[..., None] - self.centers
        return np.exp(-(d * d) / (2.0 * self.sigma**2))


@dataclass(frozen=True)
class ActuatorModel:
    decay: float = 1.0
    u_max: float = 1.0

    def __post_init__(self):
        if self.decay < 0:
            raise ValueError("decay rate c must be non-negative")
        if self.u_max <= 0:
            raise ValueError("u_max must be positive")

    def profile(self, side: int, x: np.ndarray) -> np.ndarray:
        """Decay factor of actuator ``side`` (1..4) at points ``x`` (..., 2)."""
        a = side - 1
        d = np.asarray(x, dtype=float)[..., PUSH_AXIS[a]]
        if _FAR_SIDE[a]:
            d = 1.0 - d
        return np.exp(-self.decay * d)

    def profile_derivative(self, side: int, x: np.ndarray) -> np.ndarray:
        """Derivative of :meth:`profile` along the pushed coordinate."""
        a = side - 1
        rate = self.decay if _FAR_SIDE[a] else -self.decay
        return rate * self.profile(side, x)


@dataclass
class ControlTrajectory:
    """Coefficients ``u[i, a-1, k-1]`` at the time instants ``t_i = i*dt``."""

    values: np.ndarray
    dt: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[1] != N_SIDES:
            raise ValueError(f"control values must have shape (N+1, 4, N_c), got {self.values.shape}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @classmethod
    def zeros(cls, n_steps: int, n_basis: int, dt: float) -> "ControlTrajectory":
        return cls(np.zeros((n_steps + 1, N_SIDES, n_basis)), dt)

    @classmethod
    def from_flat(cls, flat, n_basis: int, dt: float) -> "ControlTrajectory":
        flat = np.asarray(flat, dtype=float)
        per_instant = N_SIDES * n_basis
        if flat.ndim != 1 or flat.size % per_instant:
            raise ValueError(f"flat control of length {flat.size} is not a multiple of {per_instant}")
        return cls(flat.reshape(-1, N_SIDES, n_basis).copy(), dt)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def n_basis(self) -> int:
        return self.values.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)

    def flatten(self) -> np.ndarray:
        # C order gives index = i*4*N_c + (a-1)*N_c + (k-1)
        return self.values.reshape(-1).copy()

    def is_feasible(self, u_max: float, tol: float = 0.0) -> bool:
        return bool(np.all(self.values >= -tol) and np.all(self.values <= u_max + tol))

    def at_time(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolation of the coefficients at time ``t``."""
        if self.n_steps == 0:
            return self.values[0].copy()
        s = float(np.clip(t / self.dt, 0.0, self.n_steps))
        i = min(int(s), self.n_steps - 1)
        w = s - i
        return (1.0 - w) * self.values[i] + w * self.values[i + 1]


def _check_points(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != 2:
        raise ValueError("points must have a trailing dimension of 2")
    if np.any(x < 0.0) or np.any(x > 1.0):
        raise ValueError("points must lie in the closed unit square")
    return x


def side_intensity(u_instant, basis: ControlBasis, s) -> np.ndarray:
    """``u_a(s)`` for all four sides: shape ``(4,) + s.shape``."""
    u_instant = np.asarray(u_instant, dtype=float)
    return np.moveaxis(basis(s) @ u_instant.T, -1, 0)


def unit_fields(model: ActuatorModel, x) -> np.ndarray:
    """Signed unit-intensity fields ``s_a b_a(x)``; shape ``(4,) + x.shape``.

    The velocity is ``v(x) = sum_a u_a(x) * unit_fields[a](x)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.zeros((N_SIDES,) + x.shape)
    for a in range(N_SIDES):
        out[a, ..., PUSH_AXIS[a]] = SIDE_SIGN[a] * model.profile(a + 1, x)
    return out


def eval_velocity(u_instant, basis: ControlBasis, model: ActuatorModel, x) -> np.ndarray:
    """Velocity ``v(x)`` induced by the coefficients ``u_instant`` of shape (4, N_c).

    ``x`` is a single point or an array of points with trailing dimension 2.
    """
    x = _check_points(x)
    u_instant = np.asarray(u_instant, dtype=float)
    if u_instant.shape != (N_SIDES, basis.n_basis):
        raise ValueError(f"expected coefficients of shape (4, {basis.n_basis}), got {u_instant.shape}")
    v = np.zeros(x.shape)
    for a in range(N_SIDES):
        s = x[..., TANGENT_AXIS[a]]
        ua = basis(s) @ u_instant[a]
        v[..., PUSH_AXIS[a]] += SIDE_SIGN[a] * ua * model.profile(a + 1, x)
    return v


def _grid(n: int) -> np.ndarray:
    return np.linspace(0.0, 1.0, n)


def velocity_sup_norm(u_instant, basis: ControlBasis, model: ActuatorModel, n_samples: int = 64) -> float:
    """Largest Euclidean norm of ``v`` over an ``n_samples`` x ``n_samples`` grid."""
    if n_samples < 2:
        raise ValueError("sup-norm grid needs at least 2 samples per axis")
    g = _grid(n_samples)
    X, Y = np.meshgrid(g, g)
    v = eval_velocity(u_instant, basis, model, np.stack([X, Y], axis=-1))
    return float(np.max(np.hypot(v[..., 0], v[..., 1])))


def boundary_sup_norms(u_instant, basis: ControlBasis, n_samples: int = 64) -> np.ndarray:
    """``max_s |u_a(s)|`` per side on a 1D grid matching :func:`velocity_sup_norm`."""
    return np.max(np.abs(side_intensity(u_instant, basis, _grid(n_samples))), axis=1)


def trapezoid_weights(n_steps: int, dt: float) -> np.ndarray:
    w = np.full(n_steps + 1, dt)
    w[0] = w[-1] = 0.5 * dt
    if n_steps == 0:
        w[:] = 0.0
    return w


def control_norm_sq(ctrl: ControlTrajectory, basis: ControlBasis, n_samples: int = 64) -> float:
    """Squared ``L2(0,T; Linf(Gamma_a))`` norm summed over sides, trapezoidal in time."""
    per_instant = np.array([np.sum(boundary_sup_norms(u, basis, n_samples) ** 2) for u in ctrl.values])
    return float(trapezoid_weights(ctrl.n_steps, ctrl.dt) @ per_instant)


def velocity_norm_sq(ctrl: ControlTrajectory, basis: ControlBasis, model: ActuatorModel, n_samples: int = 64) -> float:
    """Squared ``L2(0,T; Linf(Omega))`` norm of the velocity field, trapezoidal in time."""
    sup = np.array([velocity_sup_norm(u, basis, model, n_samples) for u in ctrl.values])
    return float(trapezoid_weights(ctrl.n_steps, ctrl.dt) @ sup**2)
