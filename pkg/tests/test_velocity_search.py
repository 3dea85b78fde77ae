import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import exhaustive_layered_path
from pmpc.pointmass import solve_3d_min_time
from pmpc.velocity_search import (
    CoincidentWaypointsError,
    PlannerConfig,
    VelocityGraph,
    cone_resample,
    dijkstra_min_time,
    first_collision_time,
    heading_direction,
    magnitude_samples,
    plan_two_step,
    plan_velocities,
)

A_MAX = (8.0, 8.0, 12.0)


def random_graph(rng, n_wp, n_samples):
    positions = rng.uniform(-15, 15, (n_wp + 1, 3))
    layers = [rng.uniform(-5, 5, (1, 3))] + [rng.uniform(-12, 12, (n_samples, 3)) for _ in range(n_wp)]
    return VelocityGraph.build(positions, layers, A_MAX)


class TestSampling:
    def test_heading(self):
        np.testing.assert_allclose(heading_direction([0, 0, 0], [0, 3, 4]), [0, 0.6, 0.8])

    def test_coincident(self):
        with pytest.raises(CoincidentWaypointsError):
            heading_direction([1, 1, 1], [1, 1, 1])

    def test_magnitudes(self):
        m = magnitude_samples([1, 0, 0], n=20, step=1.0)
        assert m.shape == (20, 3)
        np.testing.assert_allclose(m[:, 0], np.arange(1, 21))

    def test_cone_preserves_speed_and_angles(self):
        v = np.array([3.0, 4.0, 0.0])
        c = cone_resample(v, 8, (10.0, 20.0))
        assert c.shape == (17, 3)
        np.testing.assert_allclose(np.linalg.norm(c, axis=1), 5.0)
        ang = np.degrees(np.arccos(np.clip(c @ v / 25.0, -1, 1)))
        np.testing.assert_allclose(np.sort(ang), [0] + [10] * 8 + [20] * 8, atol=1e-6)

    def test_cone_of_zero_velocity(self):
        np.testing.assert_array_equal(cone_resample(np.zeros(3)), np.zeros((1, 3)))


class TestGraph:
    def test_edge_weights_are_min_times(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 2, 3)
        w = g.weights[1][2, 1]
        ref = solve_3d_min_time((g.positions[1], g.layers[1][2]), (g.positions[2], g.layers[2][1]), A_MAX)
        assert w == pytest.approx(ref.total_time, rel=1e-12)

    def test_first_layer_single_node(self):
        with pytest.raises(ValueError):
            VelocityGraph.build(np.zeros((2, 3)), [np.zeros((2, 3)), np.zeros((1, 3))], A_MAX)

    @given(st.integers(0, 100_000), st.integers(1, 4), st.integers(1, 6))
    def test_dijkstra_equals_enumeration(self, seed, n_wp, n_samples):
        g = random_graph(np.random.default_rng(seed), n_wp, n_samples)
        path, total = dijkstra_min_time(g)
        best, _ = exhaustive_layered_path(g.weights)
        assert total == best
        assert sum(g.weights[i][path[i], path[i + 1]] for i in range(n_wp)) == pytest.approx(total)


class TestPlan:
    def test_single_leg_is_analytic(self):
        plan = plan_velocities(([0, 0, 2], [0, 0, 0]), [[10, 0, 2]], stop_mask=[True])
        assert plan.n_legs == 1
        assert plan.total_time == pytest.approx(2 * np.sqrt(10 / 8))
        np.testing.assert_array_equal(plan.velocities, np.zeros((1, 3)))

    def test_second_pass_never_slower(self):
        rng = np.random.default_rng(5)
        for _ in range(10):
            wps = rng.uniform(-20, 20, (4, 3))
            _, t1, t2 = plan_two_step((rng.uniform(-5, 5, 3), np.zeros(3)), wps)
            assert t2 <= t1

    def test_plan_passes_through_waypoints(self):
        wps = np.array([[5, 15, 2], [25, 5, 3], [20, 25, 5]], dtype=float)
        plan = plan_velocities(([0, 15, 2], [0, 0, 0]), wps)
        p, v = plan.state_at(plan.arrival_times)
        np.testing.assert_allclose(p, wps, atol=1e-6)
        np.testing.assert_allclose(v, plan.velocities, atol=1e-6)

    def test_max_waypoints_truncates(self):
        wps = [[1, 0, 0], [2, 0, 0], [3, 0, 0]]
        plan = plan_velocities(([0, 0, 0], [0, 0, 0]), wps, PlannerConfig(max_waypoints=2))
        assert plan.n_legs == 2

    def test_empty_route(self):
        plan = plan_velocities(([0, 0, 0], [0, 0, 0]), np.zeros((0, 3)))
        assert plan.total_time == 0.0

    @pytest.mark.parametrize("kw", [{"n_magnitudes": 0}, {"accel_max": (1, 0, 1)}, {"max_waypoints": 0}])
    def test_invalid_config(self, kw):
        with pytest.raises(ValueError):
            PlannerConfig(**kw)


class TestCollisionTime:
    def test_head_on_meets_half_way(self):
        a = plan_velocities(([-2, 0, 1], [0, 0, 0]), [[2, 0, 1]], stop_mask=[True])
        b = plan_velocities(([2, 0, 1], [0, 0, 0]), [[-2, 0, 1]], stop_mask=[True])
        tc = first_collision_time(a, b, (1, 1, 1 / 3), 0.2, 0.03)
        # symmetric rest-to-rest legs cross at T/2; the 0.2 m window opens just before
        assert abs(tc - a.total_time / 2) <= 0.03 + 0.1 / 8
        assert tc <= a.total_time / 2

    def test_disjoint_paths(self):
        a = plan_velocities(([0, 0, 1], [0, 0, 0]), [[5, 0, 1]])
        b = plan_velocities(([0, 5, 1], [0, 0, 0]), [[5, 5, 1]])
        assert first_collision_time(a, b, (1, 1, 1 / 3), 0.2, 0.03) is None

    def test_vertical_scaling(self):
        # stacked 0.5 m apart vertically: |E d| = 0.167 < 0.2
        a = plan_velocities(([0, 0, 1.0], [0, 0, 0]), [[5, 0, 1.0]])
        b = plan_velocities(([0, 0, 1.5], [0, 0, 0]), [[5, 0, 1.5]])
        assert first_collision_time(a, b, (1, 1, 1 / 3), 0.2, 0.03) == 0.0

    def test_bad_dt(self):
        a = plan_velocities(([0, 0, 1], [0, 0, 0]), [[5, 0, 1]])
        with pytest.raises(ValueError):
            first_collision_time(a, a, (1, 1, 1), 0.2, 0.0)
