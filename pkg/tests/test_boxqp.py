import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import minimize

from pmpc.boxqp import solve_box_qp


def random_qp(rng, n):
    M = rng.standard_normal((n, n))
    H = M @ M.T + 0.1 * np.eye(n)
    g = rng.standard_normal(n) * 5
    lo = -rng.uniform(0.1, 2, n)
    hi = rng.uniform(0.1, 2, n)
    return H, g, lo, hi


class TestBoxQp:
    def test_unconstrained_interior(self):
        H = np.diag([2.0, 4.0])
        g = np.array([-2.0, -4.0])
        x, _, ok = solve_box_qp(H, g, [-5, -5], [5, 5])
        assert ok
        np.testing.assert_allclose(x, [1, 1])

    def test_active_bound(self):
        x, _, ok = solve_box_qp(np.eye(2), np.array([-3.0, 0.5]), [-1, -1], [1, 1])
        assert ok
        np.testing.assert_allclose(x, [1, -0.5])

    def test_inverted_bounds(self):
        with pytest.raises(ValueError):
            solve_box_qp(np.eye(1), np.zeros(1), [1], [0])

    @given(st.integers(0, 100_000), st.integers(1, 12))
    def test_matches_lbfgsb(self, seed, n):
        H, g, lo, hi = random_qp(np.random.default_rng(seed), n)
        x, _, ok = solve_box_qp(H, g, lo, hi)
        assert ok
        ref = minimize(lambda z: 0.5 * z @ H @ z + g @ z, np.zeros(n), jac=lambda z: H @ z + g,
                       bounds=list(zip(lo, hi)), method="L-BFGS-B",
                       options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10_000})
        f = 0.5 * x @ H @ x + g @ x
        assert f <= ref.fun + 1e-8 * (1 + abs(ref.fun))
        assert np.all(x >= lo) and np.all(x <= hi)

    @given(st.integers(0, 100_000))
    def test_kkt_conditions(self, seed):
        H, g, lo, hi = random_qp(np.random.default_rng(seed), 8)
        x, _, _ = solve_box_qp(H, g, lo, hi)
        grad = H @ x + g
        free = (x > lo + 1e-9) & (x < hi - 1e-9)
        np.testing.assert_allclose(grad[free], 0, atol=1e-7)
        assert np.all(grad[x <= lo + 1e-9] >= -1e-7)
        assert np.all(grad[x >= hi - 1e-9] <= 1e-7)
