"""Pairwise MPC: joint optimal control problem for one or two quadrotors.

The OCP minimizes, over both vehicles' inputs, the sum of the per-vehicle
waypoint approach costs minus a saturated separation reward, subject to RK4
dynamics and an input box. It is transcribed with direct multiple shooting
and solved by Gauss-Newton SQP: each iteration linearizes the shooting
gaps, condenses the states out, solves a box-constrained QP in the inputs
and backtracks on an l1 merit function.

Array conventions: ``X`` has shape (Q, N+1, 10) and ``U`` (Q, N, 4) where Q
is the number of vehicles (1 or 2).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .boxqp import solve_box_qp
from .core_model import ATT, NU, NX, ModelParams, check_state, rk4_discrete, rk4_discrete_jacobians

WEIGHT_MODES = ("literal", "position_gated")
REFERENCE_MODES = ("waypoint", "trajectory")


@dataclass(frozen=True)
class SolverConfig:
    horizon: int = 20
    dt: float = 0.03
    mu: float = 0.6
    sigma_position: float = 10.0
    sigma_velocity: float = -100.0
    collision_weight: float = 3.0
    saturation_factor: float = 10.0    # d_sat = saturation_factor * collision tolerance
    separation_seed: float = 0.6       # lateral clearance [m] seeded into conflicting guesses; 0 disables
    weight_mode: str = "position_gated"
    reference_mode: str = "trajectory"
    max_iterations: int = 3
    kkt_tol: float = 1e-4
    step_tol: float = 1e-6
    damping: tuple = (1e-2, 1e-2, 1e-2, 1e-2)

    def __post_init__(self):
        object.__setattr__(self, "damping", tuple(float(d) for d in np.broadcast_to(self.damping, (NU,))))
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if self.horizon < 2:
            out.append("N >= 2")
        if not self.dt > 0:
            out.append("Δt > 0")
        if self.weight_mode not in WEIGHT_MODES:
            out.append(f"weight_mode in {WEIGHT_MODES}")
        if self.reference_mode not in REFERENCE_MODES:
            out.append(f"reference_mode in {REFERENCE_MODES}")
        if self.max_iterations < 1:
            out.append("max_iterations >= 1")
        if self.collision_weight < 0:
            out.append("collision_weight >= 0")
        if not self.saturation_factor > 0:
            out.append("saturation_factor > 0")
        if self.separation_seed < 0:
            out.append("separation_seed >= 0")
        if any(d <= 0 for d in self.damping):
            out.append("damping > 0")
        return out


# --------------------------------------------------------------------------- #
# cost terms
# --------------------------------------------------------------------------- #

def _along(ref, seq):
    """Broadcast a fixed (..., 3) target or a per-sample (..., K, 3) target against ``seq``."""
    ref = np.asarray(ref, dtype=float)
    return ref if ref.ndim == seq.ndim else ref[..., None, :]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def dynamic_weights(p, v, p_wp, v_wp, mu: float, sigma_position: float, sigma_velocity: float,
                    mode: str = "literal"):
    """Sigmoid weights of the position and velocity terms, per sample.

    The position weight switches on the squared distance to the waypoint.
    ``literal`` switches the velocity weight on the squared error to the
    waypoint velocity; ``position_gated`` uses ``1 - W_pos`` so the velocity
    term takes over as the vehicle nears the waypoint.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    sp = np.sum((p - _along(p_wp, p)) ** 2, axis=-1)
    Wp = _sigmoid(sigma_position * (sp - mu))
    if mode == "position_gated":
        return Wp, 1.0 - Wp
    sv = np.sum((v - _along(v_wp, v)) ** 2, axis=-1)
    return Wp, _sigmoid(sigma_velocity * (sv - mu))


def waypoint_cost(p, v, p_wp, v_wp, config: SolverConfig = SolverConfig(), weights=None,
                  p_ref=None, v_ref=None):
    """Weighted squared errors to the position and velocity targets.

    ``p`` and ``v`` are (..., K, 3) sequences; ``p_wp``/``v_wp`` are (..., 3).
    The errors are measured to ``p_ref``/``v_ref`` (per-sample (..., K, 3)
    targets) when given, else to the waypoint itself; the weights always
    come from the waypoint. With ``weights=(Wp, Wv)`` the weights are held
    fixed; otherwise they are evaluated from the sequences and
    differentiated through.

    Returns ``(cost, grad_p, grad_v)``.
    """
    p = np.asarray(p, dtype=float)
    v = np.asarray(v, dtype=float)
    ep = p - _along(p_wp if p_ref is None else p_ref, p)
    ev = v - _along(v_wp if v_ref is None else v_ref, v)
    sp = np.sum(ep * ep, axis=-1)
    sv = np.sum(ev * ev, axis=-1)
    if weights is not None:
        Wp, Wv = (np.broadcast_to(np.asarray(w, dtype=float), sp.shape) for w in weights)
        cost = float(np.sum(Wp * sp + Wv * sv))
        return cost, 2 * Wp[..., None] * ep, 2 * Wv[..., None] * ev
    c = config
    dp = p - _along(p_wp, p)
    Wp = _sigmoid(c.sigma_position * (np.sum(dp * dp, axis=-1) - c.mu))
    dWp = (2 * c.sigma_position * Wp * (1 - Wp))[..., None] * dp      # dWp/dp
    if c.weight_mode == "position_gated":
        Wv = 1.0 - Wp
        cost = float(np.sum(Wp * sp + Wv * sv))
        gp = 2 * Wp[..., None] * ep + dWp * (sp - sv)[..., None]
        return cost, gp, 2 * Wv[..., None] * ev
    dv = v - _along(v_wp, v)
    Wv = _sigmoid(c.sigma_velocity * (np.sum(dv * dv, axis=-1) - c.mu))
    dWv = (2 * c.sigma_velocity * Wv * (1 - Wv))[..., None] * dv      # dWv/dv
    cost = float(np.sum(Wp * sp + Wv * sv))
    gp = 2 * Wp[..., None] * ep + dWp * sp[..., None]
    gv = 2 * Wv[..., None] * ev + dWv * sv[..., None]
    return cost, gp, gv


def collision_cost(p1, p2, tc_index, E, weight: float, d_sat: float):
    """Negative saturated separation ``-w * sum_k min(|E(p1-p2)|^2, d_sat^2)``.

    Only samples ``0..tc_index`` count; ``tc_index=None`` disables the term.
    Returns ``(cost, grad_p1, grad_p2)``.
    """
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    g1 = np.zeros_like(p1)
    if tc_index is None or weight == 0:
        return 0.0, g1, np.zeros_like(p2)
    E = np.asarray(E, dtype=float)
    e = np.diag(E) if E.ndim == 2 else E
    k = int(tc_index) + 1
    d = p1[:k] - p2[:k]
    ed = d * e
    s = np.sum(ed * ed, axis=-1)
    active = s < d_sat * d_sat
    cost = -weight * float(np.sum(np.minimum(s, d_sat * d_sat)))
    g1[:k] = np.where(active[:, None], -2 * weight * ed * e, 0.0)
    return cost, g1, -g1


# --------------------------------------------------------------------------- #
# problem / solution containers
# --------------------------------------------------------------------------- #

@dataclass
class OcpProblem:
    x0: np.ndarray                      # (Q, 10)
    p_wp: np.ndarray                    # (Q, 3) waypoint positions
    v_wp: np.ndarray                    # (Q, 3) reference velocities at the waypoints
    tc_index: int | None = None
    params: ModelParams = field(default_factory=ModelParams)
    config: SolverConfig = field(default_factory=SolverConfig)
    p_ref: np.ndarray | None = None     # (Q, N+1, 3) per-sample position targets
    v_ref: np.ndarray | None = None     # (Q, N+1, 3) per-sample velocity targets

    def __post_init__(self):
        self.x0 = np.atleast_2d(np.asarray(self.x0, dtype=float))
        self.p_wp = np.atleast_2d(np.asarray(self.p_wp, dtype=float))
        self.v_wp = np.atleast_2d(np.asarray(self.v_wp, dtype=float))
        Q = self.x0.shape[0]
        if self.x0.shape != (Q, NX) or self.p_wp.shape != (Q, 3) or self.v_wp.shape != (Q, 3):
            raise ValueError("x0 (Q,10), p_wp and v_wp (Q,3) required")
        if Q not in (1, 2):
            raise ValueError("one or two vehicles supported")
        K = self.config.horizon + 1
        for name in ("p_ref", "v_ref"):
            ref = getattr(self, name)
            if ref is not None:
                ref = np.asarray(ref, dtype=float)
                if ref.shape != (Q, K, 3):
                    raise ValueError(f"{name} must have shape ({Q}, {K}, 3)")
                setattr(self, name, ref)
        if self.tc_index is not None:
            if not 0 <= self.tc_index <= self.config.horizon:
                raise ValueError("tc index must lie in [0, N]")
            self.tc_index = int(self.tc_index)

    @property
    def n_quads(self) -> int:
        return self.x0.shape[0]

    @property
    def d_sat(self) -> float:
        return self.config.saturation_factor * self.params.collision_tolerance


@dataclass
class OcpSolution:
    X: np.ndarray
    U: np.ndarray
    objective: float
    iterations: int
    solve_time: float
    converged: bool
    kkt_residual: float = np.inf
    dynamics_residual: float = np.inf
    merit_history: list = field(default_factory=list)

    @property
    def first_input(self) -> np.ndarray:
        return self.U[:, 0].copy()


def objective(problem: OcpProblem, X, weights=None) -> float:
    """Full objective (waypoint terms minus separation reward) for states ``X``."""
    c = problem.config
    J, _, _ = waypoint_cost(X[..., 0:3], X[..., 3:6], problem.p_wp, problem.v_wp, c, weights,
                            problem.p_ref, problem.v_ref)
    if problem.n_quads == 2:
        Jc, _, _ = collision_cost(X[0, :, 0:3], X[1, :, 0:3], problem.tc_index, problem.params.downwash,
                                  c.collision_weight, problem.d_sat)
        J += Jc
    return J


def _cost_gradient(problem: OcpProblem, X, weights):
    c = problem.config
    J, gp, gv = waypoint_cost(X[..., 0:3], X[..., 3:6], problem.p_wp, problem.v_wp, c, weights,
                            problem.p_ref, problem.v_ref)
    gX = np.zeros_like(X)
    gX[..., 0:3] = gp
    gX[..., 3:6] = gv
    if problem.n_quads == 2:
        Jc, g1, g2 = collision_cost(X[0, :, 0:3], X[1, :, 0:3], problem.tc_index, problem.params.downwash,
                                    c.collision_weight, problem.d_sat)
        J += Jc
        gX[0, :, 0:3] += g1
        gX[1, :, 0:3] += g2
    return J, gX


# --------------------------------------------------------------------------- #
# initial guesses
# --------------------------------------------------------------------------- #

def _attitude_for_acceleration(acc, g):
    """Quaternion (zero yaw) whose body z-axis points along ``acc - g``."""
    f = np.asarray(acc, dtype=float) - g
    n = np.linalg.norm(f, axis=-1, keepdims=True)
    zb = np.where(n > 1e-9, f / np.maximum(n, 1e-12), np.array([0.0, 0.0, 1.0]))
    # shortest rotation from world z to zb
    w = 1.0 + zb[..., 2]
    q = np.stack([w, -zb[..., 1], zb[..., 0], np.zeros_like(w)], axis=-1)
    qn = np.linalg.norm(q, axis=-1, keepdims=True)
    flipped = qn[..., 0] < 1e-9
    q = np.where(flipped[..., None], np.array([0.0, 1.0, 0.0, 0.0]), q / np.maximum(qn, 1e-12))
    return q


def reference_guess(problem: OcpProblem, references):
    """States sampled from point-mass references, hover inputs.

    ``references`` holds one object per vehicle exposing ``sample(dt, n)``
    returning ``(positions, velocities)`` from the current time.
    """
    c = problem.config
    N = c.horizon
    Q = problem.n_quads
    X = np.zeros((Q, N + 1, NX))
    for j in range(Q):
        ref = references[j]
        if ref is None:
            X[j] = problem.x0[j]
            continue
        pos, vel = ref.sample(c.dt, N + 1)
        X[j, :, 0:3] = pos
        X[j, :, 3:6] = vel
        acc = np.gradient(vel, c.dt, axis=0) if N + 1 > 1 else np.zeros_like(vel)
        X[j, :, ATT] = _attitude_for_acceleration(acc, problem.params.g)
    X[:, 0] = problem.x0
    U = np.broadcast_to(problem.params.hover_input(), (Q, N, NU)).copy()
    return X, U


def hover_guess(problem: OcpProblem):
    N = problem.config.horizon
    X = np.repeat(problem.x0[:, None, :], N + 1, axis=1)
    U = np.broadcast_to(problem.params.hover_input(), (problem.n_quads, N, NU)).copy()
    return X, U


def shift_warm_start(prev: OcpSolution, fill, problem: OcpProblem):
    """Drop the first stage of ``prev`` and append a reference state and hover input.

    ``fill`` is the per-vehicle reference (or ``None`` to repeat the last state).
    """
    c = problem.config
    N = c.horizon
    X = np.empty_like(prev.X)
    U = np.empty_like(prev.U)
    X[:, :-1] = prev.X[:, 1:]
    U[:, :-1] = prev.U[:, 1:]
    U[:, -1] = problem.params.hover_input()
    for j in range(prev.X.shape[0]):
        ref = None if fill is None else fill[j]
        if ref is None:
            X[j, -1] = prev.X[j, -1]
        else:
            pos, vel = ref.sample(c.dt, N + 1)
            X[j, -1, 0:3] = pos[N]
            X[j, -1, 3:6] = vel[N]
            X[j, -1, ATT] = prev.X[j, -1, ATT]
    X[:, 0] = problem.x0
    return X, U


def reference_targets(config: SolverConfig, references):
    """Per-sample ``(p_ref, v_ref)`` for the configured reference mode.

    ``waypoint`` returns ``(None, None)``: errors are measured to the fixed
    waypoint. ``trajectory`` samples each vehicle's point-mass plan on the
    horizon grid.
    """
    if config.reference_mode == "waypoint" or references is None:
        return None, None
    K = config.horizon + 1
    samples = [ref.sample(config.dt, K) for ref in references]
    return np.array([s[0] for s in samples]), np.array([s[1] for s in samples])


def separate_guess(problem: OcpProblem, X):
    """Push the two state guesses sideways where they conflict before ``t_c``.

    A head-on encounter is symmetric, so the separation gradient points
    along the line of approach and can only slow the vehicles down. Shifting
    the guesses apart horizontally, perpendicular to the current offset,
    gives the first linearization a lateral component to follow. The shift
    at each sample is the clearance deficit, split between the vehicles.
    """
    c = problem.config
    if problem.n_quads != 2 or problem.tc_index is None or c.separation_seed <= 0:
        return X
    e = np.asarray(problem.params.downwash)
    d = np.linalg.norm((X[1, :, 0:3] - X[0, :, 0:3]) * e, axis=-1)
    if d[: problem.tc_index + 1].min() >= c.separation_seed:
        return X
    r = problem.x0[1, 0:3] - problem.x0[0, 0:3]
    lateral = np.array([-r[1], r[0], 0.0])
    n = np.linalg.norm(lateral)
    lateral = lateral / n if n > 1e-9 else np.array([0.0, 1.0, 0.0])
    shift = 0.5 * np.clip(c.separation_seed - d, 0.0, None)
    shift[0] = 0.0
    X = X.copy()
    X[0, :, 0:3] -= shift[:, None] * lateral
    X[1, :, 0:3] += shift[:, None] * lateral
    return X


# --------------------------------------------------------------------------- #
# SQP
# --------------------------------------------------------------------------- #

def _condense(A, B, gaps):
    """Sensitivities ``dX = G @ dU + h`` with ``dX_0 = 0``.

    ``G`` has shape (Q, N+1, NX, N*NU) so that ``G.reshape(Q, -1, N*NU)`` is
    the dense state-by-input matrix; ``h`` has shape (Q, N+1, NX).
    """
    Q, N = A.shape[:2]
    G = np.zeros((Q, N + 1, NX, N * NU))
    h = np.zeros((Q, N + 1, NX))
    for k in range(N):
        if k:
            G[:, k + 1, :, :k * NU] = A[:, k] @ G[:, k, :, :k * NU]
            h[:, k + 1] = (A[:, k] @ h[:, k, :, None])[..., 0]
        G[:, k + 1, :, k * NU:(k + 1) * NU] = B[:, k]
        h[:, k + 1] += gaps[:, k]
    return G, h


def _reduced_gradient(G, gX):
    Q = G.shape[0]
    return (gX.reshape(Q, 1, -1) @ G.reshape(Q, -1, G.shape[-1]))[:, 0]


def _shooting(X, U, dt, params):
    F = rk4_discrete(X[:, :-1], U, dt, params)
    return F - X[:, 1:]


def _frozen_weights(problem, X):
    c = problem.config
    return dynamic_weights(X[..., 0:3], X[..., 3:6], problem.p_wp, problem.v_wp, c.mu,
                           c.sigma_position, c.sigma_velocity, c.weight_mode)


def kkt_residual(problem: OcpProblem, X, U, weights=None) -> float:
    """Max of the shooting gaps and the projected reduced gradient."""
    c = problem.config
    params = problem.params
    if weights is None:
        weights = _frozen_weights(problem, X)
    _, A, B = rk4_discrete_jacobians(X[:, :-1], U, c.dt, params)
    gaps = _shooting(X, U, c.dt, params)
    G, _ = _condense(A, B, gaps)
    _, gX = _cost_gradient(problem, X, weights)
    gU = _reduced_gradient(G, gX).reshape(U.shape)
    proj = U - np.clip(U - gU, params.u_min, params.u_max)
    return float(max(np.max(np.abs(proj)), np.max(np.abs(gaps))))


def solve_ocp(problem: OcpProblem, warm_start=None, references=None, max_iterations: int | None = None) -> OcpSolution:
    """Gauss-Newton SQP on the multiple-shooting transcription.

    ``warm_start`` may be an :class:`OcpSolution` or an ``(X, U)`` pair used
    as-is (its first state is replaced by ``x0``); otherwise ``references``
    (point-mass plans) seed the states, else the vehicles are held at ``x0``.
    Never raises on non-convergence; check ``converged``.
    """
    t_start = time.perf_counter()
    c = problem.config
    params = problem.params
    check_state(problem.x0)
    max_it = c.max_iterations if max_iterations is None else max_iterations

    if isinstance(warm_start, OcpSolution):
        X, U = warm_start.X.copy(), warm_start.U.copy()
    elif warm_start is not None:
        X, U = (np.array(a, dtype=float) for a in warm_start)
    elif references is not None:
        X, U = reference_guess(problem, references)
    else:
        X, U = hover_guess(problem)
    X[:, 0] = problem.x0
    U = np.clip(U, params.u_min, params.u_max)

    Q, N = problem.n_quads, c.horizon
    lam = np.asarray(c.damping)
    damp = np.tile(lam, N)
    rho = 0.0
    merit_history = []
    converged = False
    kkt = np.inf
    it = 0
    pv = slice(0, 6)

    for it in range(1, max_it + 1):
        Wp, Wv = _frozen_weights(problem, X)
        F, A, B = rk4_discrete_jacobians(X[:, :-1], U, c.dt, params)
        gaps = F - X[:, 1:]
        J, gX = _cost_gradient(problem, X, (Wp, Wv))
        G, h = _condense(A, B, gaps)

        hdiag = np.zeros((Q, N + 1, NX))
        hdiag[..., 0:3] = 2 * Wp[..., None]
        hdiag[..., 3:6] = 2 * Wv[..., None]
        Gpv = G[:, :, pv, :].reshape(Q, (N + 1) * 6, N * NU)
        hpv = hdiag[..., pv].reshape(Q, -1)
        lin = (gX[..., pv] + hdiag[..., pv] * h[..., pv]).reshape(Q, -1)

        gU_red = _reduced_gradient(G, gX).reshape(Q, N, NU)
        proj = U - np.clip(U - gU_red, params.u_min, params.u_max)
        kkt = float(max(np.max(np.abs(proj)), np.max(np.abs(gaps))))
        if kkt < c.kkt_tol:
            converged = True
            it -= 1
            break

        dU = np.zeros((Q, N, NU))
        for j in range(Q):
            H = Gpv[j].T @ (hpv[j][:, None] * Gpv[j]) + np.diag(damp)
            g = Gpv[j].T @ lin[j]
            lo = (params.u_min - U[j]).reshape(-1)
            hi = (params.u_max - U[j]).reshape(-1)
            d, _, _ = solve_box_qp(H, g, lo, hi)
            dU[j] = d.reshape(N, NU)
        dX = (G.reshape(Q, -1, N * NU) @ dU.reshape(Q, -1, 1)).reshape(Q, N + 1, NX) + h

        # l1 penalty must dominate the dynamics multipliers
        mult = np.zeros((Q, NX))
        mu_max = 0.0
        for k in range(N, 0, -1):
            mult = -(hdiag[:, k] * dX[:, k] + gX[:, k]) + ((mult[:, None, :] @ A[:, k])[:, 0] if k < N else 0.0)
            mu_max = max(mu_max, float(np.max(np.abs(mult))))
        rho = max(rho, 1.1 * mu_max + 1e-6)

        gap_l1 = float(np.sum(np.abs(gaps)))
        phi0 = J + rho * gap_l1
        slope = float(np.sum(gX * dX)) - rho * gap_l1
        alpha = 1.0
        accepted = False
        while alpha >= 1e-3:
            Xt = X + alpha * dX
            Ut = U + alpha * dU
            phi = objective(problem, Xt, (Wp, Wv)) + rho * float(np.sum(np.abs(_shooting(Xt, Ut, c.dt, params))))
            if phi <= phi0 + 1e-4 * alpha * min(slope, 0.0):
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break
        merit_history.append((phi0, phi))
        step = alpha * max(float(np.max(np.abs(dU))), float(np.max(np.abs(dX))))
        X, U = Xt, np.clip(Ut, params.u_min, params.u_max)
        if step < c.step_tol:
            converged = True
            break

    gaps = _shooting(X, U, c.dt, params)
    return OcpSolution(
        X=X,
        U=U,
        objective=objective(problem, X),
        iterations=it,
        solve_time=time.perf_counter() - t_start,
        converged=converged,
        kkt_residual=kkt,
        dynamics_residual=float(np.max(np.abs(gaps))),
        merit_history=merit_history,
    )
