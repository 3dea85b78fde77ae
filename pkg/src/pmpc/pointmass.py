"""Minimum-time double-integrator trajectories (bang-bang, one switch per axis).

Each axis accelerates with ``a`` for ``t1`` seconds and with ``-a`` for ``t2``
seconds. The 3-D trajectory uses the slowest axis' time and stretches the
others by scaling their acceleration with a factor ``beta`` in (0, 1].

Eliminating ``t1`` and ``t2`` from the arc equations with ``t1 + t2 = T``
leaves a quadratic in the signed acceleration::

    a**2 * T**2 - 4 * a * c - dv**2 = 0,   c = dx - (v0 + vf) * T / 2

whose only root with ``t1, t2 >= 0`` is the one with ``sign(a) == sign(c)``.
Setting ``|a| = a_max`` instead gives a quadratic in ``T`` whose valid roots
are the minimum time and the edges of any infeasible time gap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-12


class NoRootError(ValueError):
    """No admissible acceleration reduction reaches the requested duration."""


@dataclass(frozen=True)
class AxisProfile:
    x0: float
    v0: float
    xf: float
    vf: float
    accel: float          # signed acceleration of the first arc; second arc uses -accel
    t1: float
    t2: float
    beta: float = 1.0
    a_max: float = 1.0

    @property
    def duration(self) -> float:
        return self.t1 + self.t2

    @property
    def x1(self) -> float:
        return self.x0 + self.v0 * self.t1 + 0.5 * self.accel * self.t1 ** 2

    @property
    def v1(self) -> float:
        return self.v0 + self.accel * self.t1

    def state_at(self, tau):
        """Position and velocity at local time ``tau`` (clamped to the profile)."""
        tau = np.clip(np.asarray(tau, dtype=float), 0.0, self.duration)
        first = tau <= self.t1
        s = tau - self.t1
        x = np.where(
            first,
            self.x0 + self.v0 * tau + 0.5 * self.accel * tau ** 2,
            self.x1 + self.v1 * s - 0.5 * self.accel * s ** 2,
        )
        v = np.where(first, self.v0 + self.accel * tau, self.v1 - self.accel * s)
        return x, v

    def end_residual(self) -> float:
        s = self.t2
        xe = self.x1 + self.v1 * s - 0.5 * self.accel * s ** 2
        ve = self.v1 - self.accel * s
        return max(abs(xe - self.xf), abs(ve - self.vf))


# --------------------------------------------------------------------------- #
# scalar solvers
# --------------------------------------------------------------------------- #

def _quadratic_roots(a, b, c):
    """Real roots of ``a x^2 + b x + c`` computed without cancellation."""
    disc = b * b - 4 * a * c
    if disc < 0:
        if disc > -1e-12 * (b * b + abs(4 * a * c)):
            disc = 0.0
        else:
            return []
    sq = np.sqrt(disc)
    qq = -0.5 * (b + (sq if b >= 0 else -sq))
    roots = []
    if qq != 0:
        roots.append(qq / a)
        roots.append(c / qq)
    else:
        roots.append(0.0)
    return roots


def _bang_bang_candidates(x0, v0, xf, vf, a_max):
    """All ``(T, signed a, t1, t2)`` with ``|a| = a_max`` meeting both endpoints."""
    dx = xf - x0
    dv = vf - v0
    vbar = 0.5 * (v0 + vf)
    out = []
    for a in (a_max, -a_max):
        for T in _quadratic_roots(a, 4 * vbar, -(4 * dx + dv * dv / a)):
            if T < -_EPS:
                continue
            T = max(T, 0.0)
            d = dv / a
            t1 = 0.5 * (T + d)
            t2 = 0.5 * (T - d)
            tol = 1e-9 * (1 + T)
            if t1 < -tol or t2 < -tol:
                continue
            t1 = min(max(t1, 0.0), T)
            out.append((T, a, t1, T - t1))
    return out


def solve_axis_min_time(x0: float, v0: float, xf: float, vf: float, a_max: float) -> AxisProfile:
    """Minimum-time bang-bang profile between two (position, velocity) pairs."""
    if not a_max > 0:
        raise ValueError("a_max must be positive")
    if x0 == xf and v0 == vf:
        return AxisProfile(x0, v0, xf, vf, 0.0, 0.0, 0.0, 1.0, a_max)
    T, a, t1, t2 = min(_bang_bang_candidates(x0, v0, xf, vf, a_max), key=lambda c: c[0])
    return AxisProfile(x0, v0, xf, vf, a, t1, t2, 1.0, a_max)


def _required_accel(x0, v0, xf, vf, T):
    dv = vf - v0
    c = (xf - x0) - 0.5 * (v0 + vf) * T
    if c == 0.0:
        return abs(dv) / T * (1.0 if dv >= 0 else -1.0)
    return (2 * c + np.copysign(np.sqrt(4 * c * c + T * T * dv * dv), c)) / (T * T)


def sync_axis_to_time(x0: float, v0: float, xf: float, vf: float, a_max: float, T_target: float) -> AxisProfile:
    """Profile of duration ``T_target`` using the reduced acceleration ``beta * a_max``."""
    if not a_max > 0:
        raise ValueError("a_max must be positive")
    if T_target <= 0:
        if abs(xf - x0) > _EPS or abs(vf - v0) > _EPS:
            raise NoRootError("zero duration with distinct endpoints")
        return AxisProfile(x0, v0, xf, vf, 0.0, 0.0, 0.0, 1.0, a_max)
    a = _required_accel(x0, v0, xf, vf, T_target)
    if abs(a) <= _EPS * max(1.0, a_max):
        # zero-length / constant-velocity axis: convention beta = 1, no thrust
        return AxisProfile(x0, v0, xf, vf, 0.0, 0.5 * T_target, 0.5 * T_target, 1.0, a_max)
    beta = abs(a) / a_max
    if beta > 1 + 1e-9:
        raise NoRootError(
            f"duration {T_target:.6g} s needs |a| = {abs(a):.6g} > a_max = {a_max:.6g}"
        )
    if beta > 1:
        beta = 1.0
        a = np.copysign(a_max, a)
    t1 = min(max(0.5 * (T_target + (vf - v0) / a), 0.0), T_target)
    return AxisProfile(x0, v0, xf, vf, float(a), t1, T_target - t1, float(beta), a_max)


def _next_feasible_time(x0, v0, xf, vf, a_max, T):
    """Smallest duration ``>= T`` reachable with ``|a| <= a_max`` on this axis."""
    if T > 0 and abs(_required_accel(x0, v0, xf, vf, T)) <= a_max * (1 + 1e-9):
        return T
    if T <= 0 and x0 == xf and v0 == vf:
        return T
    later = [c[0] for c in _bang_bang_candidates(x0, v0, xf, vf, a_max) if c[0] > T]
    if not later:
        raise NoRootError("no feasible duration on axis")
    return min(later)


@dataclass(frozen=True)
class MassPointTrajectory:
    axes: tuple
    total_time: float
    start_time: float = 0.0

    @property
    def start(self):
        return (np.array([a.x0 for a in self.axes]), np.array([a.v0 for a in self.axes]))

    @property
    def end(self):
        return (np.array([a.xf for a in self.axes]), np.array([a.vf for a in self.axes]))

    @property
    def betas(self) -> np.ndarray:
        return np.array([a.beta for a in self.axes])

    def state_at(self, t):
        """Position/velocity at absolute time ``t``; shape (..., 3) each."""
        tau = np.asarray(t, dtype=float) - self.start_time
        xs, vs = zip(*(ax.state_at(tau) for ax in self.axes))
        return np.stack(xs, axis=-1), np.stack(vs, axis=-1)

    def position_at(self, t):
        return self.state_at(t)[0]


def solve_3d_min_time(start, end, a_max_per_axis, start_time: float = 0.0) -> MassPointTrajectory:
    """Time-optimal 3-axis trajectory between ``(position, velocity)`` pairs.

    The duration is the largest single-axis minimum time, raised to the next
    common feasible duration if some axis cannot be stretched to it.
    """
    p0, v0 = (np.asarray(a, dtype=float) for a in start)
    pf, vf = (np.asarray(a, dtype=float) for a in end)
    amax = np.broadcast_to(np.asarray(a_max_per_axis, dtype=float), (3,))
    if np.any(amax <= 0):
        raise ValueError("a_max components must be positive")
    mins = [solve_axis_min_time(p0[i], v0[i], pf[i], vf[i], amax[i]) for i in range(3)]
    T = max(m.duration for m in mins)
    for _ in range(8):
        T_new = max(_next_feasible_time(p0[i], v0[i], pf[i], vf[i], amax[i], T) for i in range(3))
        if T_new == T:
            break
        T = T_new
    axes = []
    for i in range(3):
        if mins[i].duration == T:
            axes.append(mins[i])
        else:
            axes.append(sync_axis_to_time(p0[i], v0[i], pf[i], vf[i], amax[i], T))
    return MassPointTrajectory(tuple(axes), float(T), start_time)


def sample_trajectory(traj: MassPointTrajectory, dt: float):
    """Samples ``(times, positions, velocities)`` at ``k * dt``; last one at ``T``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    T = traj.total_time
    times = np.arange(0.0, T, dt)
    if times.size == 0 or T - times[-1] > 1e-12:
        times = np.append(times, T)
    pos, vel = traj.state_at(traj.start_time + times)
    return times, pos, vel


# --------------------------------------------------------------------------- #
# vectorized durations for graph edges
# --------------------------------------------------------------------------- #

def _batch_candidates(x0, v0, xf, vf, a_max):
    """Candidate bang-bang durations, shape (..., 4); ``inf`` where invalid."""
    dx = xf - x0
    dv = vf - v0
    vbar = 0.5 * (v0 + vf)
    cands = []
    with np.errstate(divide="ignore", invalid="ignore"):
        for sgn in (1.0, -1.0):
            a = sgn * a_max
            b = 4 * vbar
            c = -(4 * dx + dv * dv / a)
            disc = b * b - 4 * a * c
            disc = np.where((disc < 0) & (disc > -1e-12 * (b * b + np.abs(4 * a * c))), 0.0, disc)
            sq = np.sqrt(np.where(disc >= 0, disc, np.nan))
            qq = -0.5 * (b + np.where(b >= 0, sq, -sq))
            r1 = qq / a
            r2 = np.where(qq != 0, c / qq, 0.0)
            for T in (r1, r2):
                d = dv / a
                tol = 1e-9 * (1 + np.abs(T))
                ok = (T >= -_EPS) & (T + d >= -2 * tol) & (T - d >= -2 * tol)
                cands.append(np.where(ok, np.maximum(T, 0.0), np.inf))
    return np.stack(cands, axis=-1)


def _batch_required_accel(x0, v0, xf, vf, T):
    dv = vf - v0
    c = (xf - x0) - 0.5 * (v0 + vf) * T
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (2 * np.abs(c) + np.sqrt(4 * c * c + T * T * dv * dv)) / (T * T)
    return np.where(T > 0, a, np.where((xf == x0) & (vf == v0), 0.0, np.inf))


def min_time_batch(p0, v0, pf, vf, a_max_per_axis) -> np.ndarray:
    """Vectorized duration of :func:`solve_3d_min_time` for broadcast arrays (..., 3)."""
    p0, v0, pf, vf = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (p0, v0, pf, vf)))
    amax = np.asarray(a_max_per_axis, dtype=float)
    amax = np.broadcast_to(amax, p0.shape)
    cands = _batch_candidates(p0, v0, pf, vf, amax)
    same = (p0 == pf) & (v0 == vf)
    axis_min = np.where(same, 0.0, cands.min(axis=-1))
    T = axis_min.max(axis=-1)
    for _ in range(8):
        Tb = T[..., None]
        feasible = _batch_required_accel(p0, v0, pf, vf, Tb) <= amax * (1 + 1e-9)
        later = np.where(cands > Tb[..., None], cands, np.inf).min(axis=-1)
        T_new = np.where(feasible, Tb, later).max(axis=-1)
        if np.array_equal(T_new, T):
            break
        T = T_new
    return T
