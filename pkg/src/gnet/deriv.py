"""Analytic first derivatives of activity rates and of the quadratic loss.

Differentiating ``rho_i = T+_i / (r_i + T-_i)`` gives the linear system
``x = x @ Omega + g`` for the row vector ``x = d rho / d theta``, hence
``x = g @ inv(I - Omega)``.  ``g`` carries the direct effect of a parameter on
its own neurons (the gamma vectors for weights).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .core import ActivityState, NetworkSpec, solve
from .errors import InvalidInputError, ShapeError, SingularSystemError

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class DerivativeBundle:
    omega: np.ndarray
    resolvent: np.ndarray
    weight_index: list
    grad: Optional[np.ndarray] = None
    jacobian: Optional[np.ndarray] = None


@dataclass(frozen=True, eq=False)
class ExtendedDerivatives:
    delta_mat: np.ndarray
    p_mat: np.ndarray
    lambda_plus_jac: np.ndarray
    lambda_minus_jac: np.ndarray
    rate_jac: np.ndarray
    rate_local: np.ndarray


class GradientResult(NamedTuple):
    grad: np.ndarray
    jacobian: np.ndarray
    residual: np.ndarray


def weight_index(spec: NetworkSpec) -> list:
    """Flat position m -> (sign, u, v); all w+ slots first, then all w- slots."""
    u, v = spec.topology.slots
    plus = [("+", int(a), int(b)) for a, b in zip(u, v)]
    minus = [("-", int(a), int(b)) for a, b in zip(u, v)]
    return plus + minus


def _loads(spec, state):
    denom = spec.r + state.t_minus
    free = (~state.saturated_mask).astype(float)
    return denom, free


def build_omega(spec: NetworkSpec, state: ActivityState, method="auto"):
    """Return ``(Omega, inv(I - Omega))``.

    Columns of saturated neurons are zeroed: a clamped rate does not move with
    its inputs.  method is "dense" (LU), "triangular" (layer-ordered
    back-substitution, acyclic only) or "auto".
    """
    denom, free = _loads(spec, state)
    omega = (spec.w_plus - spec.w_minus * state.rho[None, :]) / denom[None, :]
    omega = omega * free[None, :]
    n = spec.n
    a = np.eye(n) - omega
    order = spec.topology.order
    if method == "auto":
        method = "triangular" if order is not None else "dense"
    if method == "triangular":
        if order is None:
            raise SingularSystemError("triangular path requires an acyclic network")
        ap = a[np.ix_(order, order)]
        rp = solve_triangular(ap, np.eye(n), lower=False, unit_diagonal=True)
        res = np.empty_like(rp)
        res[np.ix_(order, order)] = rp
    elif method == "dense":
        try:
            res = np.linalg.inv(a)
        except np.linalg.LinAlgError as exc:
            raise SingularSystemError(f"I - Omega is singular: {exc}") from exc
    else:
        raise ValueError(f"unknown method {method!r}")
    cond = np.linalg.norm(a, 1) * np.linalg.norm(res, 1)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularSystemError(f"I - Omega is ill-conditioned (condition estimate {cond:.3e})")
    return omega, res


def derivative_bundle(spec, state, method="auto") -> DerivativeBundle:
    omega, res = build_omega(spec, state, method)
    return DerivativeBundle(omega, res, weight_index(spec))


def _rate_is_derived(spec):
    return ~spec.topology.is_output


def gamma_vectors(spec: NetworkSpec, state: ActivityState, u: int, v: int):
    """Direct-effect vectors (gamma+, gamma-) of the weights w+_uv and w-_uv.

    For a non-output u the rate r_u grows with every outgoing weight, which
    gives the -1/(r_u+T-_u) entries.  An output neuron keeps its rate fixed,
    so for such u that term is absent.
    """
    denom, free = _loads(spec, state)
    rho = state.rho
    der = float(_rate_is_derived(spec)[u])
    gp = np.zeros(spec.n)
    gm = np.zeros(spec.n)
    gp[u] -= der / denom[u]
    gp[v] += 1.0 / denom[v]
    gm[u] -= der / denom[u]
    gm[v] -= rho[v] / denom[v]
    return gp * free, gm * free


def drho_dw(spec, state, bundle: DerivativeBundle, sign: str, u: int, v: int) -> np.ndarray:
    """d rho / d w^sign_uv as ``gamma * rho_u @ inv(I - Omega)``."""
    gp, gm = gamma_vectors(spec, state, u, v)
    g = gp if sign == "+" else gm
    return (g * state.rho[u]) @ bundle.resolvent


def rho_jacobian(spec: NetworkSpec, state: ActivityState, resolvent=None) -> np.ndarray:
    """N x M matrix of d rho_i / d theta_m over every trainable weight.

    Each gamma vector has at most two nonzero entries (at u and v), so the
    rows of the resolvent are combined directly instead of forming gamma.
    """
    if resolvent is None:
        resolvent = build_omega(spec, state)[1]
    denom, free = _loads(spec, state)
    rho = state.rho
    u, v = spec.topology.slots
    der = _rate_is_derived(spec)[u].astype(float)
    c_u = -rho[u] * der / denom[u] * free[u]
    c_vp = rho[u] / denom[v] * free[v]
    c_vm = -rho[u] * rho[v] / denom[v] * free[v]
    ru = resolvent[u]
    rv = resolvent[v]
    jp = c_u[:, None] * ru + c_vp[:, None] * rv
    jm = c_u[:, None] * ru + c_vm[:, None] * rv
    return np.vstack([jp, jm]).T


def sample_gradient(spec, state, target, resolvent=None) -> np.ndarray:
    """Gradient of 0.5 * sum_o (rho_o - b_o)^2 for one sample."""
    jac = rho_jacobian(spec, state, resolvent)
    out = spec.outputs
    err = state.rho[out] - np.asarray(target, dtype=float)
    return err @ jac[out]


def _check_batch(spec, inputs, targets):
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if inputs.shape[0] != targets.shape[0]:
        raise ShapeError(f"{inputs.shape[0]} input rows but {targets.shape[0]} target rows")
    if inputs.shape[1] != spec.n_inputs or targets.shape[1] != spec.n_outputs:
        raise ShapeError(f"dataset is I={inputs.shape[1]}, O={targets.shape[1]}; "
                         f"network is I={spec.n_inputs}, O={spec.n_outputs}")
    return inputs, targets


def assemble_gradient(spec: NetworkSpec, inputs, targets, states=None) -> GradientResult:
    """Stacked residual E (rows sample-major), Jacobian dE/dw and G = J^T E.

    G is the gradient of 0.5 * RSS; there is no factor 2.
    """
    inputs, targets = _check_batch(spec, inputs, targets)
    if states is None:
        states = [solve(spec, a) for a in inputs]
    out = spec.outputs
    rows = []
    resid = []
    for state, b in zip(states, targets):
        jac = rho_jacobian(spec, state)
        rows.append(-jac[out])
        resid.append(b - state.rho[out])
    m = spec.n_params
    jacobian = np.vstack(rows) if rows else np.zeros((0, m))
    residual = np.concatenate(resid) if resid else np.zeros(0)
    return GradientResult(jacobian.T @ residual, jacobian, residual)


def extended_derivatives(spec: NetworkSpec, state: ActivityState, bundle=None) -> ExtendedDerivatives:
    """Sensitivities to the exogenous rates and to the output-neuron rates.

    Lambda+[i, u] = d rho_i / d lambda+_u = R[u, i] / (r_u + T-_u) and
    Lambda-[i, u] = -rho_u R[u, i] / (r_u + T-_u), i.e. ``R^T Delta^-1`` and
    ``-R^T Delta^-1 P``; the diagonal scaling sits on the source neuron u and
    the inhibitory sensitivity is non-positive (checked by finite differences).
    rate_jac[:, k] = d rho / d r_u for the k-th output u; its u-th entry
    reduces to -T+_u / (r_u + T-_u)^2 when u has no outgoing edges.
    """
    res = (bundle.resolvent if bundle is not None else build_omega(spec, state)[1])
    denom, free = _loads(spec, state)
    rho = state.rho
    lam_plus = (res * (free / denom)[:, None]).T
    lam_minus = -(res * (free * rho / denom)[:, None]).T
    out = spec.outputs
    rate_jac = -(res[out] * (free * rho / denom)[out][:, None]).T
    rate_local = -state.t_plus[out] / denom[out] ** 2 * free[out]
    return ExtendedDerivatives(np.diag(denom), np.diag(rho), lam_plus, lam_minus, rate_jac, rate_local)


def loss(targets, predictions, kind="mse", outputs=None) -> float:
    """RSS or MSE between targets (K x O) and predictions.

    When ``outputs`` is given, predictions are full K x N activity rows and
    only the output columns count (c_i = 1 on outputs, 0 elsewhere).
    """
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    pred = np.atleast_2d(np.asarray(predictions, dtype=float))
    if targets.size == 0 or targets.shape[0] == 0:
        raise InvalidInputError("loss of an empty dataset is undefined")
    if outputs is not None:
        pred = pred[:, outputs]
    if pred.shape != targets.shape:
        raise ShapeError(f"predictions {pred.shape} vs targets {targets.shape}")
    rss = float(np.sum((targets - pred) ** 2))
    if kind == "rss":
        return rss
    if kind == "mse":
        return rss / targets.shape[0]
    raise ValueError(f"unknown loss kind {kind!r}")


def exogenous_slots(spec: NetworkSpec) -> np.ndarray:
    """Neurons whose exogenous rates are trainable: every non-input neuron."""
    return np.flatnonzero(~spec.topology.is_input)


def extended_gradient(spec: NetworkSpec, inputs, targets, states=None) -> dict:
    """Gradients of 0.5 * RSS w.r.t. weights, non-input exogenous rates and output rates."""
    inputs, targets = _check_batch(spec, inputs, targets)
    if states is None:
        states = [solve(spec, a) for a in inputs]
    out = spec.outputs
    ex = exogenous_slots(spec)
    g = {"weights": np.zeros(spec.n_params), "lambda_plus": np.zeros(len(ex)),
         "lambda_minus": np.zeros(len(ex)), "r": np.zeros(len(out))}
    for state, b in zip(states, targets):
        _, res = build_omega(spec, state)
        err = state.rho[out] - b
        g["weights"] += err @ rho_jacobian(spec, state, res)[out]
        ext = extended_derivatives(spec, state, DerivativeBundle(None, res, []))
        g["lambda_plus"] += err @ ext.lambda_plus_jac[np.ix_(out, ex)]
        g["lambda_minus"] += err @ ext.lambda_minus_jac[np.ix_(out, ex)]
        g["r"] += err @ ext.rate_jac[out]
    return g
