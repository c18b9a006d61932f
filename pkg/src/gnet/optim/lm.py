"""Levenberg-Marquardt and its adaptive-momentum variant."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve

from ..core import NetworkSpec
from ..deriv import assemble_gradient
from ..errors import GNetError
from .common import BatchObjective, as_arrays, stability_warnings
from .config import MU_LIMIT, TrainerConfig, TrainReport
from .gd import _check
from .nonneg import Parameterization


def lm_step(jac, residual, mu) -> np.ndarray:
    """Solve (J^T J + mu I) delta = -J^T E.  mu = 0 gives the Gauss-Newton step."""
    jac = np.asarray(jac, dtype=float)
    g = jac.T @ np.asarray(residual, dtype=float)
    h = jac.T @ jac + mu * np.eye(jac.shape[1])
    return solve(h, -g, assume_a="pos")


class MomentumTerms(NamedTuple):
    c1: float
    c2: float
    c3: float
    delta_q: float
    lambda1: float
    lambda2: float
    delta: Optional[np.ndarray]


def lm_am_coefficients(h, g, delta_prev, zeta, delta_p, chol=None) -> MomentumTerms:
    """Adaptive-momentum step for curvature h, gradient g and previous step.

    c1 = g^T h^-1 g, c2 = g^T delta_prev, c3 = delta_prev^T h delta_prev,
    dQ = -zeta dP sqrt(c1) and
    delta = -(lambda1 / 2 lambda2) h^-1 g + delta_prev / (2 lambda2).
    delta is None when a square root or a division is undefined
    (c1 c3 - c2^2 < 0, c1 dP^2 - dQ^2 <= 0, c1 = 0 or lambda2 = 0).
    """
    h = np.asarray(h, dtype=float)
    g = np.asarray(g, dtype=float)
    dp = np.asarray(delta_prev, dtype=float)
    if chol is None:
        chol = cholesky(h, lower=True)
    hig = cho_solve((chol, True), g)
    c1 = float(g @ hig)
    c2 = float(g @ dp)
    c3 = float(dp @ h @ dp)
    dq = -zeta * delta_p * np.sqrt(max(c1, 0.0))
    num = c1 * c3 - c2 * c2
    den = c1 * delta_p ** 2 - dq ** 2
    if not (c1 > 0 and num >= 0 and den > 0):
        return MomentumTerms(c1, c2, c3, dq, float("nan"), float("nan"), None)
    lam2 = 0.5 * np.sqrt(num / den)
    if not lam2 > 0:
        return MomentumTerms(c1, c2, c3, dq, float("nan"), lam2, None)
    lam1 = (-2.0 * lam2 * dq + c2) / c1
    delta = -(lam1 / (2.0 * lam2)) * hig + dp / (2.0 * lam2)
    return MomentumTerms(c1, c2, c3, dq, lam1, lam2, delta)


def _usable(jac) -> bool:
    # zero rows are normal (an all-zero input pattern); only a dead or
    # non-finite Jacobian is fatal
    return bool(np.all(np.isfinite(jac)) and np.any(jac != 0))


def _train(spec: NetworkSpec, dataset, config: TrainerConfig, momentum: bool, callback=None) -> TrainReport:
    a, b = as_arrays(dataset)
    _check(spec, a, b)
    obj = BatchObjective(spec, a, b)
    param = Parameterization(config.nonneg_policy, spec.weights_flat())
    p = param.p0
    ev = obj.evaluate(param.weights(p), derivatives=True)
    initial = ev.mse
    mu = config.mu0
    m = p.size
    trace, mu_trace, accepted = [], [], []
    counters = {"rejected": 0, "cholesky_failures": 0, "am_bootstrap": 0, "am_fallbacks": 0}
    prev_step = None
    stop = "max_iters"
    for epoch in range(1, config.max_iters + 1):
        jac = param.jac(p, ev.jacobian)
        if not _usable(jac):
            stop = "singular_jacobian"
            break
        g = jac.T @ ev.residual
        mu_trace.append(mu)
        h = jac.T @ jac + mu * np.eye(m)
        delta = None
        terms = None
        try:
            chol = cholesky(h, lower=True)
        except LinAlgError:
            counters["cholesky_failures"] += 1
        else:
            if momentum and prev_step is not None:
                terms = lm_am_coefficients(h, g, prev_step, config.zeta, config.delta_p, chol)
                delta = terms.delta
                if delta is None:
                    counters["am_fallbacks"] += 1
            elif momentum:
                counters["am_bootstrap"] += 1
            if delta is None:
                delta = cho_solve((chol, True), -g)
        ok = False
        if delta is not None and np.all(np.isfinite(delta)):
            trial_state = param.state.copy()
            p_try = param.step(p, delta, trial_state)
            try:
                ev_try = obj.evaluate(param.weights(p_try))
                ok = ev_try.mse < ev.mse
                if ok:
                    g_try = assemble_gradient(ev_try.spec, a, b, ev_try.states)
                    ev_try = ev_try._replace(grad=g_try.grad, jacobian=g_try.jacobian, residual=g_try.residual)
            except GNetError:
                ok = False
        prev_mse = ev.mse
        if ok:
            prev_step = p_try - p
            p = p_try
            param.state = trial_state
            ev = ev_try
            mu = mu / config.beta
        else:
            counters["rejected"] += 1
            mu = mu * config.beta
        trace.append(ev.mse)
        accepted.append(ok)
        if callback is not None:
            callback(epoch, {"loss": ev.mse, "mu": mu_trace[-1], "accepted": ok, "delta": delta,
                             "weights": param.weights(p), "terms": terms})
        if config.loss_goal is not None and ev.mse <= config.loss_goal:
            stop = "goal"
            break
        if ok and abs(prev_mse - ev.mse) < config.tolerance:
            stop = "tol"
            break
        if mu > MU_LIMIT:
            stop = "damping_overflow"
            break
    return TrainReport(
        algorithm=config.algorithm, loss_trace=trace, weights=param.weights(p).copy(),
        iterations=len(trace), stop_reason=stop, initial_loss=initial,
        stability_warnings=stability_warnings(ev.spec, ev.states, config.stability_mode),
        mu_trace=mu_trace, accepted=accepted, counters=counters,
        config=config.to_dict(), spec=ev.spec)


def train_lm(spec: NetworkSpec, dataset, config: TrainerConfig, callback=None) -> TrainReport:
    """Damped Gauss-Newton with unit step.

    Each epoch solves (J^T J + mu I) delta = -G, tries w + delta and keeps it
    only if the batch MSE strictly drops; mu is divided by beta on success
    and multiplied by beta otherwise.  A rejected epoch leaves the weights
    untouched.  Stops when mu exceeds 1e12.
    """
    return _train(spec, dataset, config, momentum=False, callback=callback)


def train_lm_am(spec: NetworkSpec, dataset, config: TrainerConfig, callback=None) -> TrainReport:
    """LM whose step mixes -H^-1 G with the previous accepted step.

    The first epoch has no previous step and takes the plain LM step
    (``am_bootstrap``); epochs where the momentum terms are undefined do the
    same (``am_fallbacks``).  Acceptance and the mu schedule follow LM.
    """
    return _train(spec, dataset, config, momentum=True, callback=callback)
