"""Closed-loop simulation of one or two quadrotors flying a waypoint track.

Every control period the harness replans the point-mass references, builds
the joint OCP, solves it warm-started from the previous cycle, applies the
first input for one period and checks waypoint passes. The loop is
deterministic; wall-clock solve times are kept apart from the recorded
trajectory so reruns produce identical records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core_model import ModelParams, QuadState, Waypoint, rk4_discrete
from .pmpc_solver import (
    OcpProblem,
    SolverConfig,
    reference_targets,
    reference_guess,
    separate_guess,
    shift_warm_start,
    solve_ocp,
)
from .velocity_search import PlannerConfig, VelocityPlan, first_collision_time, plan_velocities


@dataclass(frozen=True)
class QuadSpec:
    """Initial state of one vehicle and, optionally, its own route.

    Vehicles without a route fly the scenario's shared waypoint list.
    """

    initial: QuadState
    waypoints: tuple | None = None

    def __post_init__(self):
        if self.waypoints is not None:
            object.__setattr__(self, "waypoints", tuple(self.waypoints))


@dataclass(frozen=True)
class TrackScenario:
    quads: tuple
    waypoints: tuple = ()
    params: ModelParams = field(default_factory=ModelParams)
    solver: SolverConfig = field(default_factory=SolverConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    duration: float = 30.0
    control_period: float = 0.02
    name: str = "scenario"

    def __post_init__(self):
        object.__setattr__(self, "quads", tuple(self.quads))
        object.__setattr__(self, "waypoints", tuple(self.waypoints))
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if len(self.quads) not in (1, 2):
            out.append("one or two quadrotors")
        if not self.duration > 0:
            out.append("duration > 0")
        if not self.control_period > 0:
            out.append("control_period > 0")
        for route in (self.route(j) for j in range(len(self.quads))):
            if not all(isinstance(w, Waypoint) for w in route):
                out.append("waypoints must be Waypoint instances")
                break
        return out

    @property
    def n_quads(self) -> int:
        return len(self.quads)

    def route(self, j: int) -> tuple:
        own = self.quads[j].waypoints
        return self.waypoints if own is None else own


@dataclass
class SimLog:
    """Per-cycle records of a run.

    ``states`` holds the state at every control instant including the final
    one, so it has one more row than ``inputs``: ``inputs[k]`` is applied
    from ``times[k]`` to ``times[k + 1]``. ``solve_times`` are wall-clock
    and excluded from equality and export.
    """

    times: np.ndarray          # (K+1,)
    states: np.ndarray         # (K+1, Q, 10)
    inputs: np.ndarray         # (K, Q, 4)
    waypoint_index: np.ndarray  # (K+1, Q) active waypoint at each instant
    v_wp: np.ndarray           # (K, Q, 3) planned velocity at the active waypoint
    tc_index: np.ndarray       # (K,) collision window end, -1 when absent
    iterations: np.ndarray     # (K,)
    failed: np.ndarray         # (K,) solver failure, previous input held
    pass_times: list           # per quad, list of waypoint pass instants
    n_waypoints: tuple         # route length per quad
    downwash: tuple = (1.0, 1.0, 1.0 / 3.0)
    collision_tolerance: float = 0.2
    solve_times: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_steps(self) -> int:
        return len(self.inputs)

    @property
    def n_quads(self) -> int:
        return self.states.shape[1]

    def distances(self) -> np.ndarray:
        """Scaled inter-vehicle distance ``|E (p1 - p2)|`` at every instant."""
        if self.n_quads < 2:
            return np.full(len(self.times), np.inf)
        d = (self.states[:, 0, 0:3] - self.states[:, 1, 0:3]) * np.asarray(self.downwash)
        return np.linalg.norm(d, axis=-1)

    def finished(self) -> bool:
        return all(len(p) == n for p, n in zip(self.pass_times, self.n_waypoints))


# --------------------------------------------------------------------------- #
# waypoint bookkeeping
# --------------------------------------------------------------------------- #

def moving_waypoint_position(waypoint: Waypoint, t: float) -> np.ndarray:
    if t < 0:
        raise ValueError("t must be non-negative")
    return waypoint.position_at(t)


def segment_ball_entry(a, b, center, radius: float):
    """Fraction in [0, 1] at which segment ``a -> b`` first enters the ball, or ``None``."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(b, dtype=float) - a
    f = a - np.asarray(center, dtype=float)
    c = f @ f - radius * radius
    if c < 0:
        return 0.0
    dd = d @ d
    if dd == 0:
        return None
    bh = f @ d
    disc = bh * bh - dd * c
    if disc < 0:
        return None
    s = (-bh - math.sqrt(disc)) / dd
    return s if 0.0 <= s <= 1.0 else None


def advance_waypoint(route, index: int, p_prev, p_now, t_now: float):
    """Advance past ``route[index]`` if the last step entered its tolerance ball.

    ``p_prev`` is the position one step earlier (use ``p_now`` for a static
    test). Returns ``(new index, entry fraction or None)``; at most one
    waypoint is passed per call and ``len(route)`` means finished.
    """
    if index >= len(route):
        return index, None
    wp = route[index]
    s = segment_ball_entry(p_prev, p_now, wp.position_at(t_now), wp.pass_tolerance)
    if s is None:
        return index, None
    return index + 1, s


# --------------------------------------------------------------------------- #
# loop
# --------------------------------------------------------------------------- #

def _plan_for(route, index, x, t, planner, hold) -> tuple[VelocityPlan, np.ndarray]:
    """Point-mass plan over the remaining route; finished vehicles hover at ``hold``."""
    if index < len(route):
        rest = route[index:]
        positions = [w.position_at(t) for w in rest]
        stops = [w.stop for w in rest]
    else:
        positions = [hold]
        stops = [True]
    plan = plan_velocities((x[0:3], x[3:6]), positions, planner, stop_mask=stops, start_time=t)
    return plan, np.asarray(positions[0])


def _stopping_point(x, planner: PlannerConfig) -> np.ndarray:
    """Where a vehicle braking at the planner's weakest axis limit comes to rest.

    A finished vehicle hovers there rather than on the final gate, which a
    slower teammate may still have to fly through.
    """
    v = x[3:6]
    return x[0:3] + v * np.linalg.norm(v) / (2 * min(planner.accel_max))


def _tc_index(plans, params: ModelParams, config: SolverConfig):
    if len(plans) < 2:
        return None
    tc = first_collision_time(plans[0], plans[1], params.downwash, params.collision_tolerance, config.dt)
    if tc is None:
        return None
    return min(int(round(tc / config.dt)), config.horizon)


def run_scenario(scenario: TrackScenario) -> SimLog:
    sc = scenario
    params, cfg = sc.params, sc.solver
    Q = sc.n_quads
    routes = [sc.route(j) for j in range(Q)]
    X = np.array([q.initial.to_array() for q in sc.quads])
    hold = [np.asarray(r[-1].base_position) if r else X[j, 0:3].copy() for j, r in enumerate(routes)]
    index = [0] * Q
    passes: list[list[float]] = [[] for _ in range(Q)]
    n_steps = int(math.floor(sc.duration / sc.control_period + 1e-9))

    times, states, inputs, wp_idx, v_wps, tcs, iters, failed, solve_times = ([] for _ in range(9))
    times.append(0.0)
    states.append(X.copy())
    wp_idx.append(list(index))
    prev = None
    u_last = np.broadcast_to(params.hover_input(), (Q, 4)).copy()

    for k in range(n_steps):
        if all(index[j] >= len(routes[j]) for j in range(Q)):
            break
        t = k * sc.control_period
        plans, p_tgt = [], []
        for j in range(Q):
            plan, p = _plan_for(routes[j], index[j], X[j], t, sc.planner, hold[j])
            plans.append(plan)
            p_tgt.append(p)
        v_tgt = np.array([pl.velocities[0] for pl in plans])
        tc = _tc_index(plans, params, cfg)
        p_ref, v_ref = reference_targets(cfg, plans)
        problem = OcpProblem(X.copy(), np.array(p_tgt), v_tgt, tc_index=tc, params=params, config=cfg,
                             p_ref=p_ref, v_ref=v_ref)
        if prev is not None:
            guess = shift_warm_start(prev, plans, problem)
        else:
            guess = reference_guess(problem, plans)
        guess = (separate_guess(problem, guess[0]), guess[1])

        ok = True
        try:
            sol = solve_ocp(problem, warm_start=guess)
            ok = bool(np.all(np.isfinite(sol.X)) and np.all(np.isfinite(sol.U)))
        except (ValueError, FloatingPointError, np.linalg.LinAlgError):
            ok = False
        if ok:
            u = sol.first_input
            prev = sol
            iters.append(sol.iterations)
            solve_times.append(sol.solve_time)
        else:
            # hold the last input, cold start next cycle
            u = u_last
            prev = None
            iters.append(0)
            solve_times.append(np.nan)
        u = np.clip(u, params.u_min, params.u_max)
        X_new = rk4_discrete(X, u, sc.control_period, params)
        t_new = (k + 1) * sc.control_period
        for j in range(Q):
            new, s = advance_waypoint(routes[j], index[j], X[j, 0:3], X_new[j, 0:3], t_new)
            if s is not None:
                passes[j].append(t + s * sc.control_period)
                index[j] = new
                if new == len(routes[j]):
                    hold[j] = _stopping_point(X_new[j], sc.planner)

        X = X_new
        u_last = u
        inputs.append(u.copy())
        v_wps.append(v_tgt)
        tcs.append(-1 if tc is None else tc)
        failed.append(not ok)
        times.append(t_new)
        states.append(X.copy())
        wp_idx.append(list(index))

    return SimLog(
        times=np.array(times),
        states=np.array(states),
        inputs=np.array(inputs).reshape(-1, Q, 4),
        waypoint_index=np.array(wp_idx, dtype=int),
        v_wp=np.array(v_wps).reshape(-1, Q, 3),
        tc_index=np.array(tcs, dtype=int),
        iterations=np.array(iters, dtype=int),
        failed=np.array(failed, dtype=bool),
        pass_times=passes,
        n_waypoints=tuple(len(r) for r in routes),
        downwash=params.downwash,
        collision_tolerance=params.collision_tolerance,
        solve_times=np.array(solve_times, dtype=float),
    )


# --------------------------------------------------------------------------- #
# metrics
# --------------------------------------------------------------------------- #

@dataclass(frozen=True)
class Metrics:
    lap_time: float | None        # last pass of the later vehicle; None if unfinished
    arrival_times: tuple          # per vehicle last pass, None if unfinished
    top_speed: float
    min_distance: float
    collision: bool
    completed: bool
    n_failures: int

    def to_dict(self) -> dict:
        return {
            "lap_time": self.lap_time,
            "arrival_times": list(self.arrival_times),
            "top_speed": self.top_speed,
            "min_distance": None if math.isinf(self.min_distance) else self.min_distance,
            "collision": self.collision,
            "completed": self.completed,
            "n_failures": self.n_failures,
        }


def compute_metrics(log: SimLog) -> Metrics:
    if len(log.times) == 0:
        raise ValueError("empty log")
    arrivals = []
    for p, n in zip(log.pass_times, log.n_waypoints):
        if len(p) == n:
            arrivals.append(float(p[-1]) if n else 0.0)
        else:
            arrivals.append(None)
    completed = all(a is not None for a in arrivals)
    speeds = np.linalg.norm(log.states[..., 3:6], axis=-1)
    dmin = float(np.min(log.distances()))
    return Metrics(
        lap_time=max(arrivals) if completed else None,
        arrival_times=tuple(arrivals),
        top_speed=float(np.max(speeds)),
        min_distance=dmin,
        collision=bool(dmin < log.collision_tolerance),
        completed=completed,
        n_failures=int(np.sum(log.failed)),
    )
