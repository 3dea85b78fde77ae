import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmpc.core_model import ModelParams, QuadState, SinusoidMotion, Waypoint, rk4_discrete
from pmpc.sim_harness import (
    QuadSpec,
    SimLog,
    TrackScenario,
    advance_waypoint,
    compute_metrics,
    moving_waypoint_position,
    run_scenario,
    segment_ball_entry,
)

P = ModelParams()


def synthetic_log(states, n_waypoints=(1, 1), passes=None):
    states = np.asarray(states, dtype=float)
    K = len(states) - 1
    Q = states.shape[1]
    return SimLog(
        times=0.02 * np.arange(K + 1),
        states=states,
        inputs=np.zeros((K, Q, 4)),
        waypoint_index=np.zeros((K + 1, Q), dtype=int),
        v_wp=np.zeros((K, Q, 3)),
        tc_index=-np.ones(K, dtype=int),
        iterations=np.zeros(K, dtype=int),
        failed=np.zeros(K, dtype=bool),
        pass_times=passes if passes is not None else [[] for _ in range(Q)],
        n_waypoints=n_waypoints,
    )


def hover_states(K, positions):
    X = np.zeros((K + 1, len(positions), 10))
    X[..., 0:3] = positions
    X[..., 6] = 1.0
    return X


@pytest.fixture(scope="module")
def short_switch():
    sc = TrackScenario(
        quads=[QuadSpec(QuadState.hover([-2, 0, 1]), [Waypoint((2, 0, 1), stop=True)]),
               QuadSpec(QuadState.hover([2, 0, 1]), [Waypoint((-2, 0, 1), stop=True)])],
        duration=0.6,
    )
    return sc, run_scenario(sc)


class TestWaypointProgress:
    def test_on_waypoint_advances(self):
        route = [Waypoint((1, 2, 3)), Waypoint((5, 5, 5))]
        assert advance_waypoint(route, 0, [1, 2, 3], [1, 2, 3], 0.0) == (1, 0.0)

    def test_far_does_not_advance(self):
        route = [Waypoint((1, 2, 3))]
        assert advance_waypoint(route, 0, [0, 0, 0], [0.1, 0, 0], 0.0) == (0, None)

    def test_never_skips(self):
        # a step through both gates passes only the active one
        route = [Waypoint((1, 0, 0)), Waypoint((2, 0, 0))]
        idx, s = advance_waypoint(route, 0, [0, 0, 0], [3, 0, 0], 0.0)
        assert idx == 1 and s == pytest.approx((1 - 0.3) / 3)

    def test_finished_is_terminal(self):
        assert advance_waypoint([Waypoint((0, 0, 0))], 1, [0, 0, 0], [0, 0, 0], 0.0) == (1, None)

    def test_moving_waypoint(self):
        w = Waypoint((25, 5, 3), SinusoidMotion((0, 2, 0), (0, 4, 0)))
        np.testing.assert_allclose(moving_waypoint_position(w, 1.0), [25, 7, 3])
        with pytest.raises(ValueError):
            moving_waypoint_position(w, -0.1)

    def test_moving_waypoint_lipschitz(self):
        w = Waypoint((0, 0, 0), SinusoidMotion((0, 2, 0), (0, 4, 0)))
        t = np.arange(0, 8, 0.02)
        p = np.array([w.position_at(x) for x in t])
        assert np.max(np.linalg.norm(np.diff(p, axis=0), axis=1)) <= w.motion.max_speed() * 0.02 + 1e-12

    @given(st.floats(0, 25), st.floats(0.3, 1.0), st.floats(0, 0.999), st.floats(0, 1),
           st.floats(0, 2 * np.pi), st.floats(0, np.pi))
    def test_no_tunneling(self, speed, radius, offset_frac, phase, az, el):
        # a straight step crossing the ball at any lateral offset is detected
        d = np.array([np.sin(el) * np.cos(az), np.sin(el) * np.sin(az), np.cos(el)])
        perp = np.cross(d, [0.3, 0.5, 0.8])
        perp /= np.linalg.norm(perp)
        step = speed * 0.02
        closest = offset_frac * radius * perp
        a = closest - d * (phase * step)
        b = a + d * step
        # the segment reaches the ball only if its closest approach is inside
        s = segment_ball_entry(a, b, np.zeros(3), radius)
        seg_min = min(np.linalg.norm(a + d * np.clip(-(a @ d), 0, step)), np.linalg.norm(a))
        if seg_min < radius * (1 - 1e-9):
            assert s is not None
        if s is not None:
            assert np.linalg.norm(a + s * (b - a)) <= radius * (1 + 1e-9)

    def test_consecutive_steps_cover_crossing(self):
        # 25 m/s flight past a 0.3 m ball sampled at 50 Hz: exactly one entry
        xs = np.arange(-2, 2, 25 * 0.02)
        route = [Waypoint((0.0, 0.29, 0.0))]
        idx, hits = 0, 0
        for a, b in zip(xs[:-1], xs[1:]):
            new, s = advance_waypoint(route, idx, [a, 0, 0], [b, 0, 0], 0.0)
            hits += s is not None
            idx = new
        assert idx == 1 and hits == 1


class TestScenario:
    def test_quad_count(self):
        with pytest.raises(ValueError):
            TrackScenario(quads=[])

    def test_own_route_overrides_shared(self):
        own = (Waypoint((1, 0, 0)),)
        sc = TrackScenario(quads=[QuadSpec(QuadState.hover([0, 0, 0]), own)], waypoints=[Waypoint((5, 0, 0))])
        assert sc.route(0) == own

    def test_physics_consistency(self, short_switch):
        sc, log = short_switch
        pred = rk4_discrete(log.states[:-1], log.inputs, sc.control_period, P)
        assert np.max(np.abs(pred - log.states[1:])) < 1e-9

    def test_inputs_in_box(self, short_switch):
        _, log = short_switch
        assert np.all(log.inputs >= P.u_min) and np.all(log.inputs <= P.u_max)

    def test_rerun_identical(self, short_switch):
        sc, log = short_switch
        other = run_scenario(sc)
        for f in dataclasses.fields(SimLog):
            if f.name == "solve_times":
                continue
            a, b = getattr(log, f.name), getattr(other, f.name)
            if isinstance(a, np.ndarray):
                np.testing.assert_array_equal(a, b)
            else:
                assert a == b

    def test_log_shapes(self, short_switch):
        _, log = short_switch
        K = log.n_steps
        assert K == 30
        assert log.states.shape == (K + 1, 2, 10)
        assert log.inputs.shape == (K, 2, 4)
        assert log.waypoint_index.shape == (K + 1, 2)
        assert len(log.solve_times) == K

    def test_conflict_window_detected(self, short_switch):
        _, log = short_switch
        assert np.all(log.tc_index[:5] >= 0)


class TestMetrics:
    def test_stationary(self):
        m = compute_metrics(synthetic_log(hover_states(10, [[0, 0, 0], [1, 0, 0]])))
        assert m.top_speed == 0.0
        assert m.min_distance == pytest.approx(1.0)
        assert not m.collision and not m.completed and m.lap_time is None

    def test_planted_maximum(self):
        X = hover_states(10, [[0, 0, 0], [5, 0, 0]])
        X[7, 1, 3:6] = [3.0, 4.0, 12.0]
        X[4, 0, 0:3] = [5.0, 0.0, 0.15]   # scaled distance 0.05
        m = compute_metrics(synthetic_log(X))
        assert m.top_speed == 13.0
        assert m.min_distance == pytest.approx(0.05)
        assert m.collision

    def test_lap_time_is_later_vehicle(self):
        log = synthetic_log(hover_states(3, [[0, 0, 0], [9, 0, 0]]), (2, 2), [[1.0, 2.5], [1.2, 2.0]])
        m = compute_metrics(log)
        assert m.completed and m.lap_time == 2.5
        assert m.arrival_times == (2.5, 2.0)

    def test_single_vehicle_distance(self):
        m = compute_metrics(synthetic_log(hover_states(3, [[0, 0, 0]]), (1,)))
        assert np.isinf(m.min_distance) and not m.collision
        assert m.to_dict()["min_distance"] is None

    def test_empty_log(self):
        log = synthetic_log(hover_states(0, [[0, 0, 0]]), (1,))
        log.times = np.zeros(0)
        with pytest.raises(ValueError):
            compute_metrics(log)
