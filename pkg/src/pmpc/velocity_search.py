"""Waypoint velocity selection by shortest path over sampled velocities.

Step one samples speeds along the direction of each track segment, step two
resamples a cone of directions around the step-one winner at the same speed.
Both steps run Dijkstra over a layered graph whose edge weights are the
point-mass travel times between consecutive waypoints.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np

from .pointmass import MassPointTrajectory, min_time_batch, solve_3d_min_time


class CoincidentWaypointsError(ValueError):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    n_magnitudes: int = 20
    speed_step: float = 1.0
    cone_angles_deg: tuple = (10.0, 20.0)
    cone_azimuths: int = 8
    accel_max: tuple = (8.0, 8.0, 12.0)
    max_waypoints: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "cone_angles_deg", tuple(float(a) for a in self.cone_angles_deg))
        object.__setattr__(self, "accel_max", tuple(float(a) for a in self.accel_max))
        if self.n_magnitudes < 1 or not self.speed_step > 0:
            raise ValueError("n_magnitudes >= 1 and speed_step > 0")
        if self.cone_azimuths < 0:
            raise ValueError("cone_azimuths >= 0")
        if len(self.accel_max) != 3 or not all(a > 0 for a in self.accel_max):
            raise ValueError("accel_max components > 0")
        if self.max_waypoints is not None and self.max_waypoints < 1:
            raise ValueError("max_waypoints >= 1")


@dataclass
class VelocityGraph:
    """Layered graph; layer 0 is the current state, layer i the samples at waypoint i."""

    positions: np.ndarray                       # (L, 3) layer positions
    layers: list                                # list of (n_i, 3) velocity arrays
    weights: list = field(default_factory=list)  # (n_i, n_{i+1}) travel times

    @classmethod
    def build(cls, positions, layers, a_max) -> "VelocityGraph":
        positions = np.asarray(positions, dtype=float)
        layers = [np.atleast_2d(np.asarray(l, dtype=float)) for l in layers]
        if layers[0].shape[0] != 1:
            raise ValueError("layer 0 must hold exactly one node")
        if len(layers) == 1:
            return cls(positions, layers, [])
        # all legs in one vectorized call
        p0, v0, pf, vf, shapes = [], [], [], [], []
        for i in range(len(layers) - 1):
            a, b = layers[i], layers[i + 1]
            na, nb = len(a), len(b)
            v0.append(np.repeat(a, nb, axis=0))
            vf.append(np.tile(b, (na, 1)))
            p0.append(np.broadcast_to(positions[i], (na * nb, 3)))
            pf.append(np.broadcast_to(positions[i + 1], (na * nb, 3)))
            shapes.append((na, nb))
        T = min_time_batch(np.vstack(p0), np.vstack(v0), np.vstack(pf), np.vstack(vf), a_max)
        weights = []
        k = 0
        for na, nb in shapes:
            weights.append(T[k:k + na * nb].reshape(na, nb))
            k += na * nb
        return cls(positions, layers, weights)


@dataclass
class VelocityPlan:
    velocities: np.ndarray          # (n_wp, 3) chosen velocity at each waypoint
    legs: list                      # MassPointTrajectory per leg
    arrival_times: np.ndarray       # (n_wp,) cumulative, relative to plan start
    total_time: float
    start_time: float = 0.0

    @property
    def n_legs(self) -> int:
        return len(self.legs)

    def state_at(self, t):
        """Position/velocity at absolute time(s) ``t``; holds the end state afterwards."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if not self.legs:
            raise ValueError("empty plan has no states")
        tau = t - self.start_time
        idx = np.clip(np.searchsorted(self.arrival_times, tau, side="left"), 0, self.n_legs - 1)
        pos = np.empty(t.shape + (3,))
        vel = np.empty(t.shape + (3,))
        for i in np.unique(idx):
            m = idx == i
            p, v = self.legs[i].state_at(tau[m])
            pos[m] = p
            vel[m] = v
        return pos, vel

    def sample(self, dt: float, n: int | None = None):
        """Samples at ``start + k*dt``; ``n`` samples if given, else up to the total time."""
        if n is None:
            n = int(np.floor(self.total_time / dt + 1e-9)) + 1
        return self.state_at(self.start_time + dt * np.arange(n))


# --------------------------------------------------------------------------- #
# sampling
# --------------------------------------------------------------------------- #

def heading_direction(p_prev, p_next) -> np.ndarray:
    d = np.asarray(p_next, dtype=float) - np.asarray(p_prev, dtype=float)
    n = np.linalg.norm(d)
    if n < 1e-12:
        raise CoincidentWaypointsError("consecutive waypoints coincide")
    return d / n


def magnitude_samples(direction, n: int = 20, step: float = 1.0) -> np.ndarray:
    return step * np.arange(1, n + 1)[:, None] * np.asarray(direction, dtype=float)[None, :]


def _perpendicular_basis(u):
    # helper axis least aligned with u keeps the basis well conditioned
    helper = np.zeros(3)
    helper[np.argmin(np.abs(u))] = 1.0
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    return e1, e2


def cone_resample(v_min, n_dirs: int = 8, angles_deg=(10.0, 20.0)) -> np.ndarray:
    """``v_min`` plus rings of equal-speed directions tilted by ``angles_deg``."""
    v_min = np.asarray(v_min, dtype=float)
    speed = np.linalg.norm(v_min)
    if n_dirs == 0 or speed == 0 or len(angles_deg) == 0:
        return v_min[None, :].copy()
    u = v_min / speed
    e1, e2 = _perpendicular_basis(u)
    phi = 2 * np.pi * np.arange(n_dirs) / n_dirs
    radial = np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2
    rings = [v_min[None, :]]
    for ang in np.radians(angles_deg):
        dirs = np.cos(ang) * u + np.sin(ang) * radial
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        rings.append(speed * dirs)
    return np.vstack(rings)


# --------------------------------------------------------------------------- #
# search
# --------------------------------------------------------------------------- #

def dijkstra_min_time(graph: VelocityGraph):
    """Shortest path from the single layer-0 node to any node of the last layer.

    Returns ``(chosen index per layer, total time)``; layer 0 is index 0.
    """
    n_layers = len(graph.layers)
    if n_layers == 1:
        return [0], 0.0
    W = [w.tolist() for w in graph.weights]
    dist = [[np.inf] * len(l) for l in graph.layers]
    prev = [[-1] * len(l) for l in graph.layers]
    done = [[False] * len(l) for l in graph.layers]
    dist[0][0] = 0.0
    heap = [(0.0, 0, 0)]
    last = n_layers - 1
    while heap:
        d, layer, node = heapq.heappop(heap)
        if done[layer][node]:
            continue
        done[layer][node] = True
        if layer == last:
            # first settled node of the final layer is optimal
            path = [node]
            for li in range(layer, 0, -1):
                path.append(prev[li][path[-1]])
            return path[::-1], float(d)
        nxt = layer + 1
        dn, pn, fin = dist[nxt], prev[nxt], done[nxt]
        for j, w in enumerate(W[layer][node]):
            c = d + w
            if c < dn[j] and not fin[j]:
                dn[j] = c
                pn[j] = node
                heapq.heappush(heap, (c, nxt, j))
    raise RuntimeError("final layer unreachable")


def _layers_positions(current_pos, waypoints):
    return np.vstack([np.asarray(current_pos, dtype=float)[None, :], np.asarray(waypoints, dtype=float)])


def _build_plan(positions, velocities, a_max, start_time) -> VelocityPlan:
    legs = []
    t = 0.0
    arrivals = []
    for i in range(len(positions) - 1):
        leg = solve_3d_min_time((positions[i], velocities[i]), (positions[i + 1], velocities[i + 1]), a_max, start_time=t)
        legs.append(leg)
        t += leg.total_time
        arrivals.append(t)
    return VelocityPlan(np.asarray(velocities[1:]), legs, np.array(arrivals), float(t), start_time)


def plan_velocities(current, waypoints, config: PlannerConfig = PlannerConfig(), stop_mask=None,
                    start_time: float = 0.0) -> VelocityPlan:
    """Two-pass velocity search from ``current = (position, velocity)`` through ``waypoints``.

    ``stop_mask[i]`` pins waypoint ``i`` to zero velocity (hover target).
    """
    return plan_two_step(current, waypoints, config, stop_mask, start_time)[0]


def plan_two_step(current, waypoints, config: PlannerConfig = PlannerConfig(), stop_mask=None,
                  start_time: float = 0.0):
    """Run both search passes; returns ``(plan, pass-1 total, pass-2 total)``."""
    p0, v0 = (np.asarray(a, dtype=float) for a in current)
    wps = np.asarray(waypoints, dtype=float).reshape(-1, 3)
    if config.max_waypoints is not None:
        wps = wps[: config.max_waypoints]
    n = len(wps)
    if n == 0:
        return VelocityPlan(np.zeros((0, 3)), [], np.zeros(0), 0.0, start_time), 0.0, 0.0
    stops = np.zeros(n, dtype=bool) if stop_mask is None else np.asarray(stop_mask, dtype=bool)[:n]
    a_max = np.array(config.accel_max)

    positions = _layers_positions(p0, wps)
    layers = [v0[None, :]]
    for i in range(n):
        if stops[i]:
            layers.append(np.zeros((1, 3)))
        else:
            u = heading_direction(positions[i], positions[i + 1])
            layers.append(magnitude_samples(u, config.n_magnitudes, config.speed_step))
    g1 = VelocityGraph.build(positions, layers, a_max)
    path1, t1 = dijkstra_min_time(g1)

    layers2 = [v0[None, :]] + [
        cone_resample(g1.layers[i][path1[i]], config.cone_azimuths, config.cone_angles_deg)
        for i in range(1, n + 1)
    ]
    g2 = VelocityGraph.build(positions, layers2, a_max)
    path2, t2 = dijkstra_min_time(g2)
    v_star = np.array([g2.layers[i][path2[i]] for i in range(n + 1)])
    return _build_plan(positions, v_star, a_max, start_time), t1, t2


def first_collision_time(plan_a: VelocityPlan, plan_b: VelocityPlan, E, tol: float, dt: float):
    """Earliest sample time where ``|E (pa - pb)| < tol``, or ``None``.

    Both plans are sampled on the common grid ``start + k*dt`` over their
    shared duration.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not plan_a.legs or not plan_b.legs:
        return None
    t0 = max(plan_a.start_time, plan_b.start_time)
    t_end = min(plan_a.start_time + plan_a.total_time, plan_b.start_time + plan_b.total_time)
    if t_end < t0:
        return None
    times = t0 + dt * np.arange(int(np.floor((t_end - t0) / dt + 1e-9)) + 1)
    pa, _ = plan_a.state_at(times)
    pb, _ = plan_b.state_at(times)
    E = np.asarray(E, dtype=float)
    E = np.diag(E) if E.ndim == 1 else E
    d2 = np.sum(((pa - pb) @ E.T) ** 2, axis=1)
    hit = np.flatnonzero(d2 < tol * tol)
    if hit.size == 0:
        return None
    return float(times[hit[0]] - t0)
