"""Dense convex QP with box constraints, solved by projected Newton."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError


def solve_box_qp(H, g, lower, upper, x0=None, max_iter: int = 100, tol: float = 1e-10):
    """Minimize ``0.5 x'Hx + g'x`` subject to ``lower <= x <= upper``.

    ``H`` must be symmetric positive definite. Each iteration fixes the
    variables held at a bound by the gradient, takes a Newton step on the
    rest and backtracks along the projected path.

    Returns ``(x, n_iter, converged)``.
    """
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        raise ValueError("lower bound exceeds upper bound")
    x = np.zeros_like(g) if x0 is None else np.asarray(x0, dtype=float).copy()
    x = np.clip(x, lower, upper)

    def value(z):
        return 0.5 * z @ (H @ z) + g @ z

    f = value(x)
    for it in range(1, max_iter + 1):
        grad = H @ x + g
        if np.max(np.abs(x - np.clip(x - grad, lower, upper)), initial=0.0) <= tol * (1 + np.max(np.abs(g), initial=0.0)):
            return x, it - 1, True
        clamped = ((x <= lower) & (grad > 0)) | ((x >= upper) & (grad < 0))
        free = ~clamped
        dx = np.zeros_like(x)
        if np.any(free):
            Hff = H[np.ix_(free, free)]
            try:
                dx[free] = -cho_solve(cho_factor(Hff, check_finite=False), grad[free], check_finite=False)
            except LinAlgError:
                dx[free] = -np.linalg.lstsq(Hff, grad[free], rcond=None)[0]
        else:
            return x, it - 1, True
        step = 1.0
        while True:
            xn = np.clip(x + step * dx, lower, upper)
            fn = value(xn)
            if fn <= f + 1e-4 * grad @ (xn - x) or step < 1e-12:
                break
            step *= 0.5
        if fn > f:
            return x, it, False
        x, f = xn, fn
    grad = H @ x + g
    ok = np.max(np.abs(x - np.clip(x - grad, lower, upper)), initial=0.0) <= 1e-8 * (1 + np.max(np.abs(g), initial=0.0))
    return x, max_iter, bool(ok)
