"""BFGS and DFP with the Hessian approximation kept as a Cholesky product.

Each update writes the new approximation as ``A @ A.T`` where ``A`` is a
rank-one correction of the current factor ``L`` (``H = L @ L.T``).  Both
satisfy the secant condition ``H_new @ s = y`` and equal the textbook
BFGS/DFP updates of the Hessian approximation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular

from ..core import NetworkSpec
from ..errors import GNetError
from .common import BatchObjective, as_arrays, stability_warnings
from .config import TrainerConfig, TrainReport
from .gd import _check
from .linesearch import line_search
from .nonneg import Parameterization

CURVATURE_EPS = 1e-12


@dataclass
class QuasiNewtonState:
    h_tilde: np.ndarray
    chol: np.ndarray
    prev_w: Optional[np.ndarray] = None
    prev_g: Optional[np.ndarray] = None
    prev_delta: Optional[np.ndarray] = None

    @classmethod
    def identity(cls, m) -> "QuasiNewtonState":
        return cls(np.eye(m), np.eye(m))


def bfgs_c2(h, s, y) -> float:
    return float(s @ y) / float(s @ h @ s)


def dfp_c2(h, s, y, chol=None) -> float:
    """s.y / y.H^-1.y (with H = I this is s.y / y.y)."""
    if chol is None:
        chol = cholesky(h, lower=True)
    z = solve_triangular(chol, y, lower=True)
    return float(s @ y) / float(z @ z)


def _curvature_ok(s, y) -> bool:
    sy = float(s @ y)
    return np.isfinite(sy) and sy > CURVATURE_EPS * np.linalg.norm(s) * np.linalg.norm(y)


def bfgs_update(h, s, y, chol=None) -> Optional[np.ndarray]:
    """v = c L^T s, A = L + (y - L v) v^T / (v^T v); returns A A^T or None when skipped."""
    if not _curvature_ok(s, y):
        return None
    if chol is None:
        chol = cholesky(h, lower=True)
    shs = float(s @ h @ s)
    if not shs > 0:
        return None
    c = np.sqrt(float(s @ y) / shs)
    v = c * (chol.T @ s)
    a = chol + np.outer(y - chol @ v, v) / float(v @ v)
    new = a @ a.T
    return 0.5 * (new + new.T)


def dfp_update(h, s, y, chol=None) -> Optional[np.ndarray]:
    """L v = c y, A = L - y (s^T L - v^T) / (s^T y); returns A A^T or None when skipped."""
    if not _curvature_ok(s, y):
        return None
    if chol is None:
        chol = cholesky(h, lower=True)
    z = solve_triangular(chol, y, lower=True)
    zz = float(z @ z)
    if not zz > 0:
        return None
    sy = float(s @ y)
    v = np.sqrt(sy / zz) * z
    a = chol - np.outer(y, s @ chol - v) / sy
    new = a @ a.T
    return 0.5 * (new + new.T)


UPDATES = {"bfgs": bfgs_update, "dfp": dfp_update}


@dataclass
class QuasiNewtonResult:
    x: np.ndarray
    f: float
    trace: list
    iterations: int
    stop_reason: str
    resets: int = 0
    skips: int = 0
    accepted: list = field(default_factory=list)
    state: Optional[QuasiNewtonState] = None


def minimize_quasi_newton(fg: Callable, fun: Callable, x0, method="bfgs", max_iters=100,
                          tolerance=1e-8, line_search_kind="backtracking", step=None,
                          trial_step=None, monitor=None, loss_goal=None, callback=None) -> QuasiNewtonResult:
    """Minimize with BFGS or DFP; ``fg(x) -> (f, g)`` and ``fun(x) -> f``.

    step(x, d) applies a step (projection hook), trial_step is its
    side-effect-free twin used by the line search.  monitor(x, f) gives the
    value recorded per epoch (default f); tolerance and loss_goal refer to it.
    A Cholesky failure resets H to I; a failed line search resets H, or
    stops with "stalled" when H is already I; an update whose curvature
    guard fails is skipped.
    """
    update = UPDATES[method]
    step = step or (lambda x, d: x + d)
    trial_step = trial_step or step
    monitor = monitor or (lambda x, f: f)
    x = np.asarray(x0, dtype=float).copy()
    f, g = fg(x)
    m = x.size
    qs = QuasiNewtonState.identity(m)
    fresh = True
    trace, accepted = [], []
    resets = skips = 0
    stop = "max_iters"
    prev = monitor(x, f)
    for epoch in range(1, max_iters + 1):
        try:
            qs.chol = cholesky(qs.h_tilde, lower=True)
        except LinAlgError:
            qs = QuasiNewtonState.identity(m)
            fresh = True
            resets += 1
        delta = cho_solve((qs.chol, True), -g)
        alpha = line_search(fun, x, delta, g, line_search_kind, f0=f, step=trial_step)
        info = {"x": x, "delta": delta, "alpha": alpha, "h": qs.h_tilde, "g": g}
        if alpha == 0.0:
            accepted.append(False)
            trace.append(prev)
            if callback is not None:
                callback(epoch, info)
            if fresh:
                stop = "stalled"
                break
            qs = QuasiNewtonState.identity(m)
            fresh = True
            resets += 1
            continue
        x_new = step(x, alpha * delta)
        try:
            f_new, g_new = fg(x_new)
        except GNetError:
            trace.append(prev)
            accepted.append(False)
            stop = "singular_system"
            break
        s = x_new - x
        y = g_new - g
        h_new = update(qs.h_tilde, s, y, qs.chol)
        if h_new is None:
            skips += 1
        else:
            qs.h_tilde = h_new
            fresh = False
        qs.prev_w, qs.prev_g, qs.prev_delta = x, g, s
        x, f, g = x_new, f_new, g_new
        cur = monitor(x, f)
        trace.append(cur)
        accepted.append(True)
        if callback is not None:
            callback(epoch, info)
        if loss_goal is not None and cur <= loss_goal:
            stop = "goal"
            break
        if abs(prev - cur) < tolerance:
            stop = "tol"
            break
        prev = cur
    return QuasiNewtonResult(x, f, trace, len(trace), stop, resets, skips, accepted, qs)


def _train(spec: NetworkSpec, dataset, config: TrainerConfig, method, callback=None) -> TrainReport:
    a, b = as_arrays(dataset)
    _check(spec, a, b)
    obj = BatchObjective(spec, a, b)
    param = Parameterization(config.nonneg_policy, spec.weights_flat())
    k = a.shape[0]

    def fg(p):
        ev = obj.evaluate(param.weights(p), derivatives=True)
        return ev.half_rss, param.grad(p, ev.grad)

    def fun(p):
        return obj.half_rss(param.weights(p))

    res = minimize_quasi_newton(
        fg, fun, param.p0, method=method, max_iters=config.max_iters,
        tolerance=config.tolerance, line_search_kind=config.line_search,
        step=lambda p, d: param.step(p, d),
        trial_step=lambda p, d: param.step(p, d, param.state.copy()),
        monitor=lambda p, f: 2.0 * f / k, loss_goal=config.loss_goal, callback=callback)
    final = obj.evaluate(param.weights(res.x))
    return TrainReport(
        algorithm=config.algorithm, loss_trace=res.trace, weights=param.weights(res.x).copy(),
        iterations=res.iterations, stop_reason=res.stop_reason,
        initial_loss=obj.evaluate(param.weights(param.p0)).mse,
        stability_warnings=stability_warnings(final.spec, final.states, config.stability_mode),
        accepted=res.accepted,
        counters={"hessian_resets": res.resets, "update_skips": res.skips, "halvings": param.state.halvings},
        config=config.to_dict(), spec=final.spec)


def train_bfgs(spec: NetworkSpec, dataset, config: TrainerConfig, callback=None) -> TrainReport:
    """Batch BFGS on 0.5 * RSS; the report traces the batch MSE."""
    return _train(spec, dataset, config, "bfgs", callback)


def train_dfp(spec: NetworkSpec, dataset, config: TrainerConfig, callback=None) -> TrainReport:
    """Batch DFP on 0.5 * RSS; the report traces the batch MSE."""
    return _train(spec, dataset, config, "dfp", callback)
