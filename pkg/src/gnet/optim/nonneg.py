"""Keeping weights non-negative under every update rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MAX_HALVINGS = 20


@dataclass
class NonnegState:
    """Mutable bookkeeping of the projection policies.

    frozen marks coordinates pinned at zero by ``freeze_zero``; halvings
    counts step halvings spent by ``shrink_eta``.
    """

    frozen: np.ndarray
    halvings: int = 0

    @classmethod
    def for_weights(cls, w, policy) -> "NonnegState":
        w = np.asarray(w, dtype=float)
        frozen = (w <= 0) if policy == "freeze_zero" else np.zeros(w.shape, dtype=bool)
        return cls(frozen)

    def copy(self) -> "NonnegState":
        return NonnegState(self.frozen.copy(), self.halvings)


def apply_nonneg_policy(w_old, delta, policy, state: NonnegState = None) -> np.ndarray:
    """Apply the raw step ``delta`` to ``w_old`` and project per ``policy``.

    For ``beta_square`` the step is taken in beta = sqrt(w) and squared
    back.  ``state`` is updated in place (frozen set, halving count).
    """
    w_old = np.asarray(w_old, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if policy == "beta_square":
        return (np.sqrt(w_old) + delta) ** 2
    if state is None:
        state = NonnegState.for_weights(w_old, policy)
    if policy == "clip_zero":
        return np.maximum(w_old + delta, 0.0)
    if policy == "freeze_zero":
        new = np.where(state.frozen, 0.0, np.maximum(w_old + delta, 0.0))
        state.frozen |= new <= 0.0
        return new
    if policy == "shrink_eta":
        new = w_old + delta
        bad = new < 0
        if not np.any(bad):
            return new
        out = new.copy()
        wb, db = w_old[bad], delta[bad]
        with np.errstate(divide="ignore", invalid="ignore"):
            k = np.ceil(np.log2(-db / wb))
        ok = np.isfinite(k) & (k <= MAX_HALVINGS)
        k = np.where(ok, np.maximum(k, 1), MAX_HALVINGS)
        cand = wb + db * np.exp2(-k)
        out[bad] = np.where(ok & (cand >= 0), cand, 0.0)
        state.halvings += int(k.sum())
        return out
    raise ValueError(f"unknown non-negativity policy {policy!r}")


def beta_gradient(beta, grad_w) -> np.ndarray:
    """dL/dbeta = 2 beta dL/dw for w = beta^2."""
    return 2.0 * np.asarray(beta, dtype=float) * np.asarray(grad_w, dtype=float)


class Parameterization:
    """Free parameters p of a trainer and their map to weights.

    With ``beta_square`` p = beta and w = beta^2 (no projection needed);
    otherwise p = w and each step goes through the projection policy.
    """

    def __init__(self, policy, w0):
        self.policy = policy
        w0 = np.asarray(w0, dtype=float)
        self.squared = policy == "beta_square"
        self.p0 = np.sqrt(w0) if self.squared else w0.copy()
        self.state = NonnegState.for_weights(w0, policy)

    def weights(self, p) -> np.ndarray:
        return p * p if self.squared else p

    def grad(self, p, grad_w) -> np.ndarray:
        return beta_gradient(p, grad_w) if self.squared else grad_w

    def jac(self, p, jac_w) -> np.ndarray:
        return jac_w * (2.0 * p)[None, :] if self.squared else jac_w

    def step(self, p, delta, state=None) -> np.ndarray:
        """New parameters after ``delta``; state defaults to the live state."""
        if self.squared:
            return p + delta
        return apply_nonneg_policy(p, delta, self.policy, self.state if state is None else state)
