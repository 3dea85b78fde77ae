"""Quadrotor rigid-body model with collective thrust and body-rate inputs.

State layout used by the array routines (one row per vehicle/step)::

    x = [px, py, pz, vx, vy, vz, qw, qx, qy, qz]
    u = [thrust, wx, wy, wz]

Quaternions are scalar-first (Hamilton) and rotate body-frame vectors into
the world frame, so the world-frame thrust is ``R(q) @ [0, 0, thrust]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NX = 10
NU = 4

POS = slice(0, 3)
VEL = slice(3, 6)
ATT = slice(6, 10)


class InvalidStateError(ValueError):
    """Raised for non-finite or non-normalized states and inputs."""


# --------------------------------------------------------------------------- #
# quaternion algebra
# --------------------------------------------------------------------------- #

def quaternion_to_rotation(q) -> np.ndarray:
    """Rotation matrix (body to world) of a unit quaternion ``(w, x, y, z)``.

    Accepts a single quaternion of shape (4,) or a stack (..., 4).
    """
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def quaternion_product_matrix(q) -> np.ndarray:
    """Left-multiplication matrix ``L(q)`` with ``q ⊗ p = L(q) @ p``."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    L = np.empty(q.shape[:-1] + (4, 4))
    L[..., 0, :] = np.stack([w, -x, -y, -z], axis=-1)
    L[..., 1, :] = np.stack([x, w, -z, y], axis=-1)
    L[..., 2, :] = np.stack([y, z, w, -x], axis=-1)
    L[..., 3, :] = np.stack([z, -y, x, w], axis=-1)
    return L


def quaternion_multiply(q, p) -> np.ndarray:
    return np.einsum("...ij,...j->...i", quaternion_product_matrix(q), np.asarray(p, dtype=float))


def axis_angle_quaternion(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def _rate_matrix(w) -> np.ndarray:
    """``Omega(w)`` with ``q ⊗ (0, w) = Omega(w) @ q``."""
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]
    z = np.zeros_like(wx)
    O = np.empty(w.shape[:-1] + (4, 4))
    O[..., 0, :] = np.stack([z, -wx, -wy, -wz], axis=-1)
    O[..., 1, :] = np.stack([wx, z, wz, -wy], axis=-1)
    O[..., 2, :] = np.stack([wy, -wz, z, wx], axis=-1)
    O[..., 3, :] = np.stack([wz, wy, -wx, z], axis=-1)
    return O


# --------------------------------------------------------------------------- #
# domain types
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class ModelParams:
    """Physical parameters and input box shared by simulator and OCP.

    ``rate_max`` bounds all three body rates; ``downwash`` is the diagonal of
    the matrix that scales inter-vehicle offsets before measuring distance.
    """

    mass: float = 1.0
    gravity: tuple = (0.0, 0.0, -9.81)
    thrust_min: float = 1.0
    thrust_max: float = 30.0
    rate_max: float = 3.0
    downwash: tuple = (1.0, 1.0, 1.0 / 3.0)
    collision_tolerance: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "gravity", tuple(float(g) for g in self.gravity))
        object.__setattr__(self, "downwash", tuple(float(e) for e in self.downwash))
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.mass > 0:
            out.append("mass > 0")
        if not self.thrust_min >= 0:
            out.append("T_min >= 0")
        if not self.thrust_max > self.thrust_min:
            out.append("T_max > T_min")
        if not self.rate_max > 0:
            out.append("ω_max > 0")
        if len(self.downwash) != 3 or not all(e > 0 for e in self.downwash):
            out.append("E diagonal entries > 0")
        if len(self.gravity) != 3 or not all(np.isfinite(self.gravity)):
            out.append("gravity finite 3-vector")
        if not self.collision_tolerance > 0:
            out.append("δ_tol > 0")
        return out

    @property
    def g(self) -> np.ndarray:
        return np.array(self.gravity)

    @property
    def E(self) -> np.ndarray:
        return np.diag(self.downwash)

    @property
    def hover_thrust(self) -> float:
        return self.mass * float(np.linalg.norm(self.gravity))

    @property
    def u_min(self) -> np.ndarray:
        return np.array([self.thrust_min, -self.rate_max, -self.rate_max, -self.rate_max])

    @property
    def u_max(self) -> np.ndarray:
        return np.array([self.thrust_max, self.rate_max, self.rate_max, self.rate_max])

    def hover_input(self) -> np.ndarray:
        return np.array([self.hover_thrust, 0.0, 0.0, 0.0])


@dataclass
class QuadState:
    position: np.ndarray
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    attitude: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(3)
        self.velocity = np.asarray(self.velocity, dtype=float).reshape(3)
        self.attitude = np.asarray(self.attitude, dtype=float).reshape(4)
        check_state(self.to_array())

    @classmethod
    def from_array(cls, x) -> "QuadState":
        x = np.asarray(x, dtype=float)
        return cls(x[POS], x[VEL], x[ATT])

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.attitude])

    @classmethod
    def hover(cls, position) -> "QuadState":
        return cls(position)

    def __eq__(self, other):
        if not isinstance(other, QuadState):
            return NotImplemented
        return bool(np.array_equal(self.to_array(), other.to_array()))


@dataclass
class ControlInput:
    collective_thrust: float
    body_rates: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.collective_thrust = float(self.collective_thrust)
        self.body_rates = np.asarray(self.body_rates, dtype=float).reshape(3)

    @classmethod
    def from_array(cls, u) -> "ControlInput":
        return cls(u[0], u[1:4])

    def to_array(self) -> np.ndarray:
        return np.concatenate([[self.collective_thrust], self.body_rates])

    def clamped(self, params: ModelParams) -> "ControlInput":
        return ControlInput.from_array(np.clip(self.to_array(), params.u_min, params.u_max))


def check_state(x, tol: float = 1e-6) -> None:
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise InvalidStateError("state has non-finite components")
    n = np.linalg.norm(x[..., ATT], axis=-1)
    if np.any(np.abs(n - 1.0) > tol):
        raise InvalidStateError(f"attitude quaternion not unit (norm {np.max(np.abs(n - 1)) + 1:.9g})")


# --------------------------------------------------------------------------- #
# dynamics on stacked arrays
# --------------------------------------------------------------------------- #

def state_derivative(X, U, params: ModelParams) -> np.ndarray:
    """Continuous dynamics for stacked states (..., 10) and inputs (..., 4)."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    q = X[..., ATT]
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    # third column of R(q): body z-axis in world frame
    zb = np.stack([2 * (x * z + w * y), 2 * (y * z - w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    dX = np.empty(np.broadcast_shapes(X.shape, U.shape[:-1] + (NX,)))
    dX[..., POS] = X[..., VEL]
    dX[..., VEL] = params.g + zb * (U[..., 0:1] / params.mass)
    wx, wy, wz = U[..., 1], U[..., 2], U[..., 3]
    dX[..., 6] = -0.5 * (x * wx + y * wy + z * wz)
    dX[..., 7] = 0.5 * (w * wx + y * wz - z * wy)
    dX[..., 8] = 0.5 * (w * wy - x * wz + z * wx)
    dX[..., 9] = 0.5 * (w * wz + x * wy - y * wx)
    return dX


def state_jacobians(X, U, params: ModelParams):
    """Jacobians ``(df/dx, df/du)`` of :func:`state_derivative`."""
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    batch = X.shape[:-1]
    q = X[..., ATT]
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    T = U[..., 0] / params.mass

    wx, wy, wz = U[..., 1], U[..., 2], U[..., 3]

    A = np.zeros(batch + (NX, NX))
    A[..., 0, 3] = A[..., 1, 4] = A[..., 2, 5] = 1.0
    # d(T * zb)/dq, zb = third column of R(q)
    A[..., 3, 6], A[..., 3, 7], A[..., 3, 8], A[..., 3, 9] = 2 * T * y, 2 * T * z, 2 * T * w, 2 * T * x
    A[..., 4, 6], A[..., 4, 7], A[..., 4, 8], A[..., 4, 9] = -2 * T * x, -2 * T * w, 2 * T * z, 2 * T * y
    A[..., 5, 7], A[..., 5, 8] = -4 * T * x, -4 * T * y
    # 0.5 * Omega(w)
    A[..., 6, 7], A[..., 6, 8], A[..., 6, 9] = -0.5 * wx, -0.5 * wy, -0.5 * wz
    A[..., 7, 6], A[..., 7, 8], A[..., 7, 9] = 0.5 * wx, 0.5 * wz, -0.5 * wy
    A[..., 8, 6], A[..., 8, 7], A[..., 8, 9] = 0.5 * wy, -0.5 * wz, 0.5 * wx
    A[..., 9, 6], A[..., 9, 7], A[..., 9, 8] = 0.5 * wz, 0.5 * wy, -0.5 * wx

    B = np.zeros(batch + (NX, NU))
    B[..., 3, 0] = 2 * (x * z + w * y) / params.mass
    B[..., 4, 0] = 2 * (y * z - w * x) / params.mass
    B[..., 5, 0] = (1 - 2 * (x * x + y * y)) / params.mass
    # 0.5 * q ⊗ (0, e_i)
    B[..., 6, 1], B[..., 6, 2], B[..., 6, 3] = -0.5 * x, -0.5 * y, -0.5 * z
    B[..., 7, 1], B[..., 7, 2], B[..., 7, 3] = 0.5 * w, -0.5 * z, 0.5 * y
    B[..., 8, 1], B[..., 8, 2], B[..., 8, 3] = 0.5 * z, 0.5 * w, -0.5 * x
    B[..., 9, 1], B[..., 9, 2], B[..., 9, 3] = -0.5 * y, 0.5 * x, 0.5 * w
    return A, B


def _normalize_attitude(X) -> np.ndarray:
    X = np.array(X, dtype=float, copy=True)
    X[..., ATT] /= np.linalg.norm(X[..., ATT], axis=-1, keepdims=True)
    return X


def rk4_discrete(X, U, dt: float, params: ModelParams, normalize: bool = True) -> np.ndarray:
    """One RK4 step with zero-order-hold input on stacked arrays.

    With ``normalize`` the quaternion is renormalized before and after the
    step, matching :func:`rk4_discrete_jacobians`.
    """
    if normalize:
        X = _normalize_attitude(X)
    k1 = state_derivative(X, U, params)
    k2 = state_derivative(X + 0.5 * dt * k1, U, params)
    k3 = state_derivative(X + 0.5 * dt * k2, U, params)
    k4 = state_derivative(X + dt * k3, U, params)
    Xn = X + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return _normalize_attitude(Xn) if normalize else Xn


def rk4_discrete_jacobians(X, U, dt: float, params: ModelParams):
    """Discrete map ``F`` and its Jacobians for stacked inputs.

    ``F(x, u) = n(RK4(n(x), u))`` where ``n`` renormalizes the quaternion, so
    iterates whose quaternion drifted off the unit sphere are projected back.
    Returns ``(F, dF/dx, dF/du)``.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float)
    batch = X.shape[:-1]
    eye = np.broadcast_to(np.eye(NX), batch + (NX, NX))

    qn = np.linalg.norm(X[..., ATT], axis=-1)
    qh = X[..., ATT] / qn[..., None]
    Xs = X.copy()
    Xs[..., ATT] = qh
    P_in = np.array(eye)
    P_in[..., ATT, ATT] = (np.eye(4) - qh[..., :, None] * qh[..., None, :]) / qn[..., None, None]

    h = dt
    k1 = state_derivative(Xs, U, params)
    A1, B1 = state_jacobians(Xs, U, params)
    X2 = Xs + 0.5 * h * k1
    k2 = state_derivative(X2, U, params)
    A2, B2 = state_jacobians(X2, U, params)
    X3 = Xs + 0.5 * h * k2
    k3 = state_derivative(X3, U, params)
    A3, B3 = state_jacobians(X3, U, params)
    X4 = Xs + h * k3
    k4 = state_derivative(X4, U, params)
    A4, B4 = state_jacobians(X4, U, params)

    dk1x, dk1u = A1, B1
    dk2x = A2 @ (eye + 0.5 * h * dk1x)
    dk2u = A2 @ (0.5 * h * dk1u) + B2
    dk3x = A3 @ (eye + 0.5 * h * dk2x)
    dk3u = A3 @ (0.5 * h * dk2u) + B3
    dk4x = A4 @ (eye + h * dk3x)
    dk4u = A4 @ (h * dk3u) + B4

    Xr = Xs + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    Ax = eye + h / 6.0 * (dk1x + 2 * dk2x + 2 * dk3x + dk4x)
    Bu = h / 6.0 * (dk1u + 2 * dk2u + 2 * dk3u + dk4u)

    rn = np.linalg.norm(Xr[..., ATT], axis=-1)
    rh = Xr[..., ATT] / rn[..., None]
    P_out = np.array(eye)
    P_out[..., ATT, ATT] = (np.eye(4) - rh[..., :, None] * rh[..., None, :]) / rn[..., None, None]
    F = Xr.copy()
    F[..., ATT] = rh
    return F, P_out @ Ax @ P_in, P_out @ Bu


# --------------------------------------------------------------------------- #
# typed wrappers
# --------------------------------------------------------------------------- #

def dynamics_derivative(x: QuadState, u: ControlInput, p: ModelParams):
    """Return ``(d_position, d_velocity, d_attitude)`` for one quadrotor."""
    xa = x.to_array()
    ua = u.to_array()
    if not (np.all(np.isfinite(xa)) and np.all(np.isfinite(ua))):
        raise InvalidStateError("non-finite state or input")
    check_state(xa)
    d = state_derivative(xa, ua, p)
    return d[POS], d[VEL], d[ATT]


def rk4_step(x: QuadState, u: ControlInput, dt: float, p: ModelParams) -> QuadState:
    if not dt > 0:
        raise ValueError("dt must be positive")
    xa = x.to_array()
    ua = u.to_array()
    if not np.all(np.isfinite(ua)):
        raise InvalidStateError("non-finite input")
    check_state(xa)
    return QuadState.from_array(rk4_discrete(xa, ua, dt, p))


# --------------------------------------------------------------------------- #
# waypoints
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class SinusoidMotion:
    """Per-axis displacement ``A * sin(2*pi*t/period + phase)``.

    Axes with zero amplitude or zero period do not move.
    """

    amplitude: tuple = (0.0, 0.0, 0.0)
    period: tuple = (1.0, 1.0, 1.0)
    phase: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in ("amplitude", "period", "phase"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != 3 or not all(np.isfinite(val)):
                raise ValueError(f"motion {name} must be a finite 3-vector")
            object.__setattr__(self, name, val)
        if any(p < 0 for p in self.period):
            raise ValueError("motion period >= 0")

    def displacement(self, t: float) -> np.ndarray:
        A = np.array(self.amplitude)
        P = np.array(self.period)
        active = (A != 0) & (P > 0)
        safe = np.where(active, P, 1.0)
        return np.where(active, A * np.sin(2 * np.pi * t / safe + np.array(self.phase)), 0.0)

    def max_speed(self) -> float:
        A = np.array(self.amplitude)
        P = np.array(self.period)
        active = (A != 0) & (P > 0)
        w = np.where(active, 2 * np.pi / np.where(active, P, 1.0), 0.0)
        return float(np.linalg.norm(np.abs(A) * w))


@dataclass(frozen=True)
class Waypoint:
    """Gate position, optionally moving, with a pass tolerance radius.

    ``stop`` marks a hover target: the planner fixes the velocity there to
    zero instead of sampling fly-through speeds.
    """

    base_position: tuple
    motion: SinusoidMotion | None = None
    pass_tolerance: float = 0.3
    stop: bool = False

    def __post_init__(self):
        pos = tuple(float(v) for v in self.base_position)
        if len(pos) != 3 or not all(np.isfinite(pos)):
            raise ValueError("waypoint position must be a finite 3-vector")
        object.__setattr__(self, "base_position", pos)
        if not self.pass_tolerance > 0:
            raise ValueError("pass_tolerance > 0")

    def position_at(self, t: float) -> np.ndarray:
        p = np.array(self.base_position)
        if self.motion is not None:
            p = p + self.motion.displacement(t)
        return p
