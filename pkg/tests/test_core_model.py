import numpy as np
import pytest
from hypothesis import given, strategies as st

from pmpc.core_model import (
    ControlInput,
    InvalidStateError,
    ModelParams,
    QuadState,
    SinusoidMotion,
    Waypoint,
    axis_angle_quaternion,
    dynamics_derivative,
    quaternion_multiply,
    quaternion_to_rotation,
    rk4_discrete,
    rk4_discrete_jacobians,
    rk4_step,
    state_derivative,
    state_jacobians,
)

P = ModelParams()


def random_state(rng, n=()):
    X = np.empty(n + (10,))
    X[..., 0:3] = rng.uniform(-5, 5, n + (3,))
    X[..., 3:6] = rng.uniform(-8, 8, n + (3,))
    q = rng.standard_normal(n + (4,))
    X[..., 6:10] = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return X


def random_input(rng, n=()):
    U = np.empty(n + (4,))
    U[..., 0] = rng.uniform(1, 30, n)
    U[..., 1:4] = rng.uniform(-3, 3, n + (3,))
    return U


class TestModelParams:
    def test_table_defaults(self):
        assert P.thrust_min == 1.0 and P.thrust_max == 30.0
        assert P.rate_max == 3.0
        assert P.collision_tolerance == 0.2
        assert P.downwash == (1.0, 1.0, 1.0 / 3.0)

    def test_negative_rate_bound_names_invariant(self):
        with pytest.raises(ValueError, match="ω_max > 0"):
            ModelParams(rate_max=-1.0)

    @pytest.mark.parametrize("kw", [{"mass": 0.0}, {"thrust_min": 40.0}, {"collision_tolerance": -0.1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            ModelParams(**kw)

    def test_hover_input_balances_gravity(self):
        x = QuadState.hover([0, 0, 1])
        _, dv, _ = dynamics_derivative(x, ControlInput(P.hover_thrust), P)
        np.testing.assert_allclose(dv, 0.0, atol=1e-12)


class TestQuaternion:
    def test_rotation_matches_axis_angle(self):
        # 90 degrees about z maps x to y
        R = quaternion_to_rotation(axis_angle_quaternion([0, 0, 1], np.pi / 2))
        np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-12)

    @given(st.integers(0, 10_000))
    def test_rotation_orthonormal(self, seed):
        q = random_state(np.random.default_rng(seed))[6:10]
        R = quaternion_to_rotation(q)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)

    @given(st.integers(0, 10_000))
    def test_product_is_rotation_composition(self, seed):
        rng = np.random.default_rng(seed)
        q, p = random_state(rng, (2,))[:, 6:10]
        np.testing.assert_allclose(
            quaternion_to_rotation(quaternion_multiply(q, p)),
            quaternion_to_rotation(q) @ quaternion_to_rotation(p),
            atol=1e-12,
        )


class TestDerivative:
    def test_hover_with_zero_rates_is_equilibrium(self):
        X = QuadState.hover([1, 2, 3]).to_array()
        d = state_derivative(X, P.hover_input(), P)
        np.testing.assert_allclose(d, 0.0, atol=1e-12)

    def test_thrust_acts_along_body_z(self):
        q = axis_angle_quaternion([1, 0, 0], 0.3)
        x = QuadState([0, 0, 0], [0, 0, 0], q)
        _, dv, _ = dynamics_derivative(x, ControlInput(10.0), P)
        np.testing.assert_allclose(dv, quaternion_to_rotation(q) @ [0, 0, 10.0] + P.g)

    def test_non_unit_quaternion_rejected(self):
        with pytest.raises(InvalidStateError):
            QuadState([0, 0, 0], [0, 0, 0], [1, 1, 0, 0])

    def test_non_finite_input_rejected(self):
        with pytest.raises(InvalidStateError):
            dynamics_derivative(QuadState.hover([0, 0, 0]), ControlInput(np.nan), P)


def central_jacobian(f, x, h=1e-6):
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


class TestJacobians:
    @pytest.mark.parametrize("seed", range(5))
    def test_continuous_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        X, U = random_state(rng), random_input(rng)
        A, B = state_jacobians(X, U, P)
        np.testing.assert_allclose(A, central_jacobian(lambda x: state_derivative(x, U, P), X), atol=1e-7)
        np.testing.assert_allclose(B, central_jacobian(lambda u: state_derivative(X, u, P), U), atol=1e-7)

    @pytest.mark.parametrize("seed", range(5))
    def test_discrete_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        X, U = random_state(rng), random_input(rng)
        F, A, B = rk4_discrete_jacobians(X, U, 0.03, P)
        np.testing.assert_allclose(F, rk4_discrete(X, U, 0.03, P), atol=1e-14)
        np.testing.assert_allclose(A, central_jacobian(lambda x: rk4_discrete(x, U, 0.03, P), X), atol=1e-7)
        np.testing.assert_allclose(B, central_jacobian(lambda u: rk4_discrete(X, u, 0.03, P), U), atol=1e-7)

    def test_batched_equals_loop(self):
        rng = np.random.default_rng(3)
        X, U = random_state(rng, (2, 5)), random_input(rng, (2, 5))
        F, A, B = rk4_discrete_jacobians(X, U, 0.03, P)
        F1, A1, B1 = rk4_discrete_jacobians(X[1, 3], U[1, 3], 0.03, P)
        np.testing.assert_allclose(F[1, 3], F1)
        np.testing.assert_allclose(A[1, 3], A1)
        np.testing.assert_allclose(B[1, 3], B1)


class TestRk4:
    def test_constant_yaw_rate_and_climb_match_closed_form(self):
        # thrust 15 N upright, yaw rate 2 rad/s: closed-form position and attitude
        wz, T, t = 2.0, 15.0, 0.4
        x = QuadState([0, 0, 0], [1, 0, 0])
        u = ControlInput(T, [0, 0, wz])
        for _ in range(40):
            x = rk4_step(x, u, t / 40, P)
        az = T / P.mass + P.g[2]
        np.testing.assert_allclose(x.position, [t, 0, 0.5 * az * t * t], atol=1e-10)
        np.testing.assert_allclose(x.attitude, [np.cos(wz * t / 2), 0, 0, np.sin(wz * t / 2)], atol=1e-10)

    def test_fourth_order_convergence(self):
        # against an adaptive high-accuracy integrator
        from scipy.integrate import solve_ivp

        rng = np.random.default_rng(11)
        X0, U = random_state(rng), random_input(rng)
        ref = solve_ivp(lambda t, x: state_derivative(x, U, P), (0, 0.3), X0, rtol=1e-12, atol=1e-12).y[:, -1]
        errs = []
        for n in (10, 20):
            X = X0.copy()
            for _ in range(n):
                X = rk4_discrete(X, U, 0.3 / n, P, normalize=False)
            errs.append(np.max(np.abs(X - ref)))
        assert errs[0] / errs[1] > 12  # ~16 for fourth order

    @given(st.integers(0, 10_000))
    def test_quaternion_stays_unit(self, seed):
        rng = np.random.default_rng(seed)
        X = rk4_discrete(random_state(rng), random_input(rng), 0.05, P)
        assert np.linalg.norm(X[6:10]) == pytest.approx(1.0, abs=1e-12)

    def test_bad_step_rejected(self):
        with pytest.raises(ValueError):
            rk4_step(QuadState.hover([0, 0, 0]), ControlInput(9.81), 0.0, P)


class TestWaypoint:
    def test_static_waypoint_ignores_time(self):
        w = Waypoint((1, 2, 3))
        np.testing.assert_array_equal(w.position_at(7.5), [1, 2, 3])

    def test_sinusoid_peak(self):
        w = Waypoint((25, 5, 3), SinusoidMotion((0, 2, 0), (0, 4, 0)))
        np.testing.assert_allclose(w.position_at(1.0), [25, 7, 3])

    def test_max_speed(self):
        m = SinusoidMotion((0, 2, 0), (0, 4, 0))
        assert m.max_speed() == pytest.approx(2 * 2 * np.pi / 4)

    @pytest.mark.parametrize("kw", [{"pass_tolerance": 0.0}, {"base_position": (0, np.inf, 0)}])
    def test_invalid(self, kw):
        args = {"base_position": (0, 0, 0), **kw}
        with pytest.raises(ValueError):
            Waypoint(**args)
