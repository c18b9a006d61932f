"""Batch evaluation shared by the trainers."""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from ..core import NetworkSpec, check_stability, derive_rates, solve
from ..deriv import assemble_gradient
from ..errors import GNetError, NonConvergenceError, ShapeError
from ..parallel import ordered_map

# replaces the rate of a neuron whose outgoing weights were all clipped to zero
TRAIN_RATE_FLOOR = 1e-9


def as_arrays(dataset):
    """(inputs, targets) from a Dataset or any object/tuple carrying both."""
    if isinstance(dataset, tuple):
        a, b = dataset
    else:
        a, b = dataset.inputs, dataset.targets
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    return a, b


def batch_forward(spec: NetworkSpec, dataset, derive=True) -> np.ndarray:
    """K x N matrix whose row k is the activity vector for sample k."""
    a, _ = as_arrays(dataset) if not isinstance(dataset, np.ndarray) else (np.atleast_2d(dataset), None)
    if a.shape[0] == 0:
        return np.zeros((0, spec.n))
    if a.shape[1] != spec.n_inputs:
        raise ShapeError(f"dataset has {a.shape[1]} inputs, network has {spec.n_inputs}")
    if derive:
        spec = derive_rates(spec, rate_floor=TRAIN_RATE_FLOOR)
    return np.vstack([s.rho for s in solve_all(spec, a)])


def solve_all(spec, inputs) -> list:
    def one(k):
        try:
            return solve(spec, inputs[k])
        except NonConvergenceError as exc:
            raise NonConvergenceError(exc.residual, exc.iterations,
                                      f"sample {k}: {exc}") from exc
    return ordered_map(one, range(len(inputs)))


class Evaluation(NamedTuple):
    spec: NetworkSpec
    mse: float
    half_rss: float
    states: list
    grad: Optional[np.ndarray] = None
    jacobian: Optional[np.ndarray] = None
    residual: Optional[np.ndarray] = None


class BatchObjective:
    """Batch loss of a network as a function of its flat weight vector."""

    def __init__(self, spec: NetworkSpec, inputs, targets):
        self.template = spec
        self.inputs = inputs
        self.targets = targets
        self.k = inputs.shape[0]

    def spec_for(self, w) -> NetworkSpec:
        return self.template.with_weights_flat(w, rate_floor=TRAIN_RATE_FLOOR)

    def evaluate(self, w, derivatives=False) -> Evaluation:
        spec = self.spec_for(w)
        states = solve_all(spec, self.inputs)
        out = spec.outputs
        rss = float(sum(np.sum((b - s.rho[out]) ** 2) for s, b in zip(states, self.targets)))
        if not derivatives:
            return Evaluation(spec, rss / self.k, 0.5 * rss, states)
        g = assemble_gradient(spec, self.inputs, self.targets, states)
        return Evaluation(spec, rss / self.k, 0.5 * rss, states, g.grad, g.jacobian, g.residual)

    def half_rss(self, w) -> float:
        """0.5 * RSS, or inf where the network cannot be built or solved."""
        try:
            return self.evaluate(w).half_rss
        except GNetError:
            return float("inf")


def stability_warnings(spec, states, mode) -> list:
    notes = []
    for k, st in enumerate(states):
        rep = check_stability(st, spec, mode=mode)
        if not rep.stable:
            notes.append(f"sample {k}: neurons {rep.unstable_neurons()} at or above unit load")
    return notes
