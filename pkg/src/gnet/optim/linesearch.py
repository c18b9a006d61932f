"""Step-length selection along a search direction."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize_scalar

ARMIJO_C = 1e-4
MAX_HALVINGS = 20


def backtracking(objective, w, delta, grad, f0=None, step=None, c=ARMIJO_C, max_halvings=MAX_HALVINGS) -> float:
    """Largest alpha in {1, 1/2, ..., 2^-20} with sufficient decrease.

    Accepts when ``objective(w + alpha delta) <= f0 - c alpha |grad . delta|``.
    Returns 0.0 for an ascent direction or when no alpha qualifies.
    ``step(w, d)`` maps a raw step to the trial point (projection hook).
    """
    slope = float(np.dot(grad, delta))
    if not slope < 0:
        return 0.0
    if f0 is None:
        f0 = objective(w)
    step = step or (lambda x, d: x + d)
    alpha = 1.0
    for _ in range(max_halvings + 1):
        f = objective(step(w, alpha * delta))
        if math.isfinite(f) and f <= f0 - c * alpha * abs(slope):
            return alpha
        alpha *= 0.5
    return 0.0


def exact(objective, w, delta, grad, f0=None, step=None, **_) -> float:
    """Minimize phi(alpha) = objective(w + alpha delta) over alpha > 0 with Brent's method."""
    slope = float(np.dot(grad, delta))
    if not slope < 0:
        return 0.0
    step = step or (lambda x, d: x + d)

    def phi(a):
        f = objective(step(w, a * delta))
        return f if math.isfinite(f) else np.inf

    res = minimize_scalar(phi, bracket=(0.0, 1.0), method="brent", options={"xtol": 1e-12})
    f0 = objective(w) if f0 is None else f0
    if not (res.x > 0 and res.fun < f0):
        return backtracking(objective, w, delta, grad, f0, step)
    return float(res.x)


def line_search(objective, w, delta, grad, kind="backtracking", f0=None, step=None) -> float:
    if kind == "none":
        return 1.0
    if kind == "backtracking":
        return backtracking(objective, w, delta, grad, f0, step)
    if kind == "exact":
        return exact(objective, w, delta, grad, f0, step)
    raise ValueError(f"unknown line search {kind!r}")
