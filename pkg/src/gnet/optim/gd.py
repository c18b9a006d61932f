"""Online gradient descent, plain and with trainable exogenous and output rates."""

from __future__ import annotations

import numpy as np

from ..core import NetworkSpec, solve
from ..deriv import assemble_gradient, exogenous_slots, extended_gradient
from ..errors import GNetError, ShapeError
from .common import TRAIN_RATE_FLOOR, as_arrays, solve_all, stability_warnings
from .config import TrainerConfig, TrainReport
from .nonneg import NonnegState, Parameterization, apply_nonneg_policy

# r_out never drops below this when there is no outgoing mass to respect
RATE_MIN = 1e-6


def _check(spec, a, b):
    if a.shape[1] != spec.n_inputs or b.shape[1] != spec.n_outputs:
        raise ShapeError(f"dataset is I={a.shape[1]}, O={b.shape[1]}; "
                         f"network is I={spec.n_inputs}, O={spec.n_outputs}")


def batch_mse(spec, a, b) -> tuple:
    states = solve_all(spec, a)
    out = spec.outputs
    rss = sum(float(np.sum((t - s.rho[out]) ** 2)) for s, t in zip(states, b))
    return rss / a.shape[0], states


def project_output_rates(r, out_mass):
    """Keep each output rate above its outgoing weight mass and above zero."""
    floor = np.maximum(out_mass, 0.0)
    low = r <= floor
    return np.where(low, np.where(floor > 0, floor * (1 + 1e-6), RATE_MIN), r)


class _ExtendedParams:
    """Exogenous rates of non-input neurons plus output rates."""

    def __init__(self, spec, policy):
        self.ex = exogenous_slots(spec)
        self.out = spec.outputs
        self.lp = spec.lambda_plus[self.ex].copy()
        self.lm = spec.lambda_minus[self.ex].copy()
        self.r = spec.r[self.out].copy()
        # the squared reparameterization is kept for weights; rates are clipped
        self.policy = "clip_zero" if policy == "beta_square" else policy
        self.st_p = NonnegState.for_weights(self.lp, self.policy)
        self.st_m = NonnegState.for_weights(self.lm, self.policy)

    def apply(self, spec):
        lp = spec.lambda_plus.copy()
        lm = spec.lambda_minus.copy()
        r = spec.r.copy()
        lp[self.ex] = self.lp
        lm[self.ex] = self.lm
        r[self.out] = self.r
        return spec.with_params(lambda_plus=lp, lambda_minus=lm, r=r, rate_floor=TRAIN_RATE_FLOOR)

    def update(self, grads, eta1, eta2, out_mass):
        self.lp = apply_nonneg_policy(self.lp, -eta1 * grads["lambda_plus"], self.policy, self.st_p)
        self.lm = apply_nonneg_policy(self.lm, -eta1 * grads["lambda_minus"], self.policy, self.st_m)
        self.r = project_output_rates(self.r - eta2 * grads["r"], out_mass)


def _online(spec: NetworkSpec, dataset, config: TrainerConfig, extended: bool, callback=None) -> TrainReport:
    a, b = as_arrays(dataset)
    _check(spec, a, b)
    k_total = a.shape[0]
    param = Parameterization(config.nonneg_policy, spec.weights_flat())
    p = param.p0
    ext = _ExtendedParams(spec, config.nonneg_policy) if extended else None

    def build(p_vec):
        s = spec.with_weights_flat(param.weights(p_vec), rate_floor=TRAIN_RATE_FLOOR)
        return ext.apply(s) if ext is not None else s

    cur = build(p)
    initial, states = batch_mse(cur, a, b)
    trace = []
    stop = "max_iters"
    prev = initial
    out = spec.outputs
    for epoch in range(1, config.max_iters + 1):
        try:
            for k in range(k_total):
                st = solve(cur, a[k])
                g = assemble_gradient(cur, a[k:k + 1], b[k:k + 1], [st])
                if ext is not None:
                    eg = extended_gradient(cur, a[k:k + 1], b[k:k + 1], [st])
                p_new = param.step(p, -config.eta * param.grad(p, g.grad))
                if ext is not None:
                    nxt = spec.with_weights_flat(param.weights(p_new), rate_floor=TRAIN_RATE_FLOOR)
                    mass = nxt.w_plus.sum(axis=1) + nxt.w_minus.sum(axis=1)
                    ext.update(eg, config.eta1, config.eta2, mass[out])
                p = p_new
                cur = build(p)
            mse, states = batch_mse(cur, a, b)
        except GNetError:
            stop = "singular_system"
            break
        trace.append(mse)
        if callback is not None:
            callback(epoch, {"loss": mse, "weights": param.weights(p), "spec": cur})
        if config.loss_goal is not None and mse <= config.loss_goal:
            stop = "goal"
            break
        if abs(prev - mse) < config.tolerance:
            stop = "tol"
            break
        prev = mse
    return TrainReport(
        algorithm=config.algorithm, loss_trace=trace, weights=param.weights(p).copy(),
        iterations=len(trace), stop_reason=stop, initial_loss=initial,
        stability_warnings=stability_warnings(cur, states, config.stability_mode) if states else [],
        counters={"halvings": param.state.halvings}, config=config.to_dict(), spec=cur)


def train_gd(spec: NetworkSpec, dataset, config: TrainerConfig, callback=None) -> TrainReport:
    """Online delta rule: one weight update per sample, samples in cyclic order.

    Each step solves the network for one pattern, takes
    ``w <- w - eta * dE_k/dw`` and projects with the non-negativity policy;
    rates of non-output neurons are re-derived from the new weights.  One
    epoch is a full pass; the loss trace holds the exact batch MSE after it.
    """
    return _online(spec, dataset, config, extended=False, callback=callback)


def train_gd_extended(spec: NetworkSpec, dataset, config: TrainerConfig, callback=None) -> TrainReport:
    """Online descent on weights (eta), non-input exogenous rates (eta1) and output rates (eta2).

    Exogenous rates stay non-negative through the configured policy (clipped
    under ``beta_square``); output rates are kept above their outgoing
    weight mass.  With eta1 = eta2 = 0 the trajectory equals :func:`train_gd`.
    """
    return _online(spec, dataset, config, extended=True, callback=callback)
