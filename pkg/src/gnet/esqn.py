"""Echo state queueing networks: a fixed random-neuron reservoir with a ridge readout.

Input neurons carry ``a_i / r_i``.  A hidden neuron combines the current
input term with the previous step's states of all neurons:

    rho_i(k) = (sum_I w+_ji a_j(k)/r_j + sum_{I+H} w+_ji rho_j(k-1))
               / (r_i + sum_I w-_ji a_j(k)/r_j + sum_{I+H} w-_ji rho_j(k-1))

``w[j, i]`` is the weight of the edge j -> i, as in :class:`gnet.core.NetworkSpec`.
There is no inner fixed point; every state is clamped to [0, 1].
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy import stats

from .data import nmse
from .errors import IllConditionedError, InvalidInputError, InvalidParameterError, NotFittedError, ShapeError
from .parallel import ordered_map

DEFAULT_DENSITY = 0.2
DEFAULT_RIDGE = 1e-6
DEFAULT_WASHOUT = 50


class InputScalingWarning(UserWarning):
    """An input exceeded its neuron's rate, so its state was clamped at 1."""


@dataclass(eq=False)
class EsqnModel:
    n_inputs: int
    n_hidden: int
    w_plus: np.ndarray
    w_minus: np.ndarray
    r: np.ndarray
    ridge_lambda: float = DEFAULT_RIDGE
    washout: int = DEFAULT_WASHOUT
    readout: Optional[np.ndarray] = None
    state: np.ndarray = field(default=None)
    seed: Optional[int] = None

    def __post_init__(self):
        n = self.n_inputs + self.n_hidden
        for name in ("w_plus", "w_minus"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (n, n):
                raise ShapeError(f"{name} has shape {a.shape}, expected {(n, n)}")
            if np.any(a < 0) or not np.all(np.isfinite(a)):
                raise InvalidParameterError(f"{name} must be finite and non-negative")
            if np.any(a[:, :self.n_inputs] != 0):
                raise InvalidParameterError("input neurons take no reservoir feedback")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        r = np.array(self.r, dtype=float).reshape(-1)
        if r.shape != (n,) or np.any(~(r > 0)):
            raise InvalidParameterError("rates must be a positive vector of length I+H")
        r.setflags(write=False)
        self.r = r
        if self.ridge_lambda < 0:
            raise InvalidParameterError("ridge_lambda must be non-negative")
        if self.washout < 0:
            raise InvalidParameterError("washout must be non-negative")
        if self.state is None:
            self.state = np.zeros(n)

    @property
    def n(self) -> int:
        return self.n_inputs + self.n_hidden

    @classmethod
    def random(cls, n_inputs, n_hidden, seed=None, density=DEFAULT_DENSITY, w_max=1.0,
               margin=1.2, ridge_lambda=DEFAULT_RIDGE, washout=DEFAULT_WASHOUT) -> "EsqnModel":
        """Sparse reservoir: each edge input->hidden and hidden->hidden is present
        with probability ``density``; w+ and w- are uniform on [0, w_max]; each
        rate is ``margin`` times the neuron's outgoing weight mass (``margin``
        when it has none).  Larger margins give faster-fading memory.
        """
        if n_inputs < 1 or n_hidden < 1:
            raise InvalidParameterError("need at least one input and one hidden neuron")
        if not 0 < density <= 1:
            raise InvalidParameterError("density must lie in (0, 1]")
        if margin < 1:
            raise InvalidParameterError("margin must be at least 1")
        rng = np.random.default_rng(seed)
        n = n_inputs + n_hidden
        mask = rng.random((n, n)) < density
        mask[:, :n_inputs] = False
        wp = np.where(mask, rng.uniform(0.0, w_max, (n, n)), 0.0)
        wm = np.where(mask, rng.uniform(0.0, w_max, (n, n)), 0.0)
        mass = wp.sum(axis=1) + wm.sum(axis=1)
        r = margin * np.where(mass > 0, mass, 1.0)
        return cls(n_inputs, n_hidden, wp, wm, r, ridge_lambda, washout, seed=seed)

    def reset(self):
        self.state = np.zeros(self.n)

    def to_dict(self) -> dict:
        return {
            "kind": "esqn", "version": 1,
            "n_inputs": self.n_inputs, "n_hidden": self.n_hidden,
            "w_plus": self.w_plus.tolist(), "w_minus": self.w_minus.tolist(), "r": self.r.tolist(),
            "ridge_lambda": self.ridge_lambda, "washout": self.washout, "seed": self.seed,
            "readout": None if self.readout is None else np.asarray(self.readout).tolist(),
        }

    @classmethod
    def from_dict(cls, doc) -> "EsqnModel":
        ro = doc.get("readout")
        return cls(int(doc["n_inputs"]), int(doc["n_hidden"]), np.asarray(doc["w_plus"]),
                   np.asarray(doc["w_minus"]), np.asarray(doc["r"]), float(doc["ridge_lambda"]),
                   int(doc["washout"]), None if ro is None else np.asarray(ro, dtype=float),
                   seed=doc.get("seed"))

    def to_json(self) -> str:
        return json.dumps(self.to_dict()) + "\n"


def _next_state(model: EsqnModel, prev, a):
    ni = model.n_inputs
    a = np.asarray(a, dtype=float).reshape(-1)
    if a.size != ni:
        raise ShapeError(f"input has {a.size} entries, reservoir has {ni} inputs")
    x = a / model.r[:ni]
    if np.any(x > 1):
        warnings.warn("input above its neuron's rate; state clamped to 1", InputScalingWarning, stacklevel=3)
    num = x @ model.w_plus[:ni] + prev @ model.w_plus
    den = model.r + x @ model.w_minus[:ni] + prev @ model.w_minus
    new = np.empty(model.n)
    new[:ni] = x
    new[ni:] = num[ni:] / den[ni:]
    return np.clip(new, 0.0, 1.0)


def esqn_step(model: EsqnModel, a) -> np.ndarray:
    """Advance the reservoir one step on input ``a``; returns a copy of the new state."""
    model.state = _next_state(model, model.state, a)
    return model.state.copy()


def esqn_states(model: EsqnModel, inputs, start=None) -> np.ndarray:
    """T x (I+H) states for an input sequence, starting from ``start`` (zeros by default).

    Does not touch ``model.state``.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[1] != model.n_inputs and inputs.shape[0] == model.n_inputs and inputs.shape[1] == 1:
        inputs = inputs.T
    s = np.zeros(model.n) if start is None else np.asarray(start, dtype=float)
    out = np.empty((inputs.shape[0], model.n))
    for k, a in enumerate(inputs):
        s = _next_state(model, s, a)
        out[k] = s
    return out


def _design(states):
    return np.hstack([states, np.ones((states.shape[0], 1))])


def esqn_fit(model: EsqnModel, inputs, targets) -> np.ndarray:
    """Fit the readout on the states after the washout; returns the O x (I+H+1) matrix.

    The last column is the bias; it is not penalized.  With ridge_lambda = 0
    the design must have full column rank.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if inputs.shape[0] != targets.shape[0]:
        raise ShapeError(f"{inputs.shape[0]} input steps but {targets.shape[0]} targets")
    cols = model.n + 1
    if inputs.shape[0] <= model.washout + cols:
        raise InvalidInputError(f"sequence of length {inputs.shape[0]} is too short: need more than "
                                f"washout + I + H + 1 = {model.washout + cols}")
    x = _design(esqn_states(model, inputs)[model.washout:])
    y = targets[model.washout:]
    lam = model.ridge_lambda
    if lam == 0:
        coef, _, rank, _ = np.linalg.lstsq(x, y, rcond=None)
        if rank < cols:
            raise IllConditionedError(f"design matrix has rank {rank} < {cols}; use ridge_lambda > 0")
    else:
        pen = np.sqrt(lam) * np.eye(cols)
        pen[-1, -1] = 0.0
        coef = np.linalg.lstsq(np.vstack([x, pen]), np.vstack([y, np.zeros((cols, y.shape[1]))]), rcond=None)[0]
    model.readout = coef.T.copy()
    return model.readout


class Prediction(NamedTuple):
    predictions: np.ndarray
    states: np.ndarray
    nmse: Optional[float]


def esqn_predict(model: EsqnModel, inputs, targets=None, start=None) -> Prediction:
    """One-step-ahead predictions driven by the observed inputs (teacher forcing)."""
    if model.readout is None:
        raise NotFittedError("readout not fitted; call esqn_fit first")
    states = esqn_states(model, inputs, start)
    pred = _design(states) @ model.readout.T
    score = None
    if targets is not None:
        t = np.asarray(targets, dtype=float)
        score = nmse(pred, t.reshape(pred.shape))
    return Prediction(pred, states, score)


def fit_linear_ar(inputs, targets, ridge=0.0) -> np.ndarray:
    """Least-squares linear predictor with bias; returns coefficients (bias last)."""
    x = _design(np.atleast_2d(np.asarray(inputs, dtype=float)))
    y = np.asarray(targets, dtype=float)
    if ridge:
        pen = np.sqrt(ridge) * np.eye(x.shape[1])
        pen[-1, -1] = 0.0
        x = np.vstack([x, pen])
        y = np.concatenate([y.reshape(len(y), -1), np.zeros((pen.shape[0], y.reshape(len(y), -1).shape[1]))])
    return np.linalg.lstsq(x, y, rcond=None)[0]


def predict_linear_ar(coef, inputs) -> np.ndarray:
    return _design(np.atleast_2d(np.asarray(inputs, dtype=float))) @ coef


class TrialSummary(NamedTuple):
    mean: float
    half_width: float
    values: tuple
    confidence: float

    def row(self, label="ESQN") -> str:
        """Table row: label, mean NMSE and confidence half-width to four decimals."""
        return f"{label}\t{self.mean:.4f}\t±{self.half_width:.4f}"


def summarize_trials(values, confidence=0.95) -> TrialSummary:
    """Mean and Student-t confidence half-width of independent trial scores."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise InvalidInputError("need at least two trials for a confidence interval")
    half = stats.t.ppf(0.5 + confidence / 2, v.size - 1) * v.std(ddof=1) / np.sqrt(v.size)
    return TrialSummary(float(v.mean()), float(half), tuple(float(x) for x in v), confidence)


def run_trials(trial_fn, n_trials=20, base_seed=0, confidence=0.95) -> TrialSummary:
    """Call ``trial_fn(seed)`` for seeds base_seed .. base_seed+n-1 and summarize the scores.

    Trials may run in parallel (GNET_THREADS); seeds fix the order of results.
    """
    scores = ordered_map(trial_fn, range(base_seed, base_seed + n_trials))
    return summarize_trials(scores, confidence)


def holdout_nmse(dataset, n_hidden=50, seed=0, train_fraction=0.7, **reservoir_kw) -> dict:
    """Fit ESQN and a linear baseline of the same inputs on a time-ordered split.

    The reservoir runs over the whole sequence so the test segment starts
    from a warmed-up state; the readout sees only the training steps.
    """
    a, b = dataset.inputs, dataset.targets
    cut = int(round(train_fraction * a.shape[0]))
    model = EsqnModel.random(a.shape[1], n_hidden, seed=seed, **reservoir_kw)
    esqn_fit(model, a[:cut], b[:cut])
    pred = esqn_predict(model, a).predictions
    coef = fit_linear_ar(a[:cut], b[:cut])
    base = predict_linear_ar(coef, a[cut:])
    return {"esqn": nmse(pred[cut:], b[cut:]), "linear": nmse(base, b[cut:]), "model": model}
