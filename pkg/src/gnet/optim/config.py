"""Trainer configuration and the report every trainer returns."""

from __future__ import annotations

import dataclasses
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import ConfigError

ALGORITHMS = ("gd", "gd_ext", "bfgs", "dfp", "lm", "lm_am")
POLICIES = ("freeze_zero", "clip_zero", "shrink_eta", "beta_square")
LINE_SEARCHES = ("none", "backtracking", "exact")
STABILITY_MODES = ("all", "outputs")

# max_iters, tol: normal ends; goal: loss_goal reached; singular_jacobian,
# singular_system: derivative system broke down; damping_overflow: mu > 1e12;
# stalled: no descent step left along the current direction.
STOP_REASONS = ("max_iters", "tol", "goal", "singular_jacobian", "singular_system",
                "damping_overflow", "stalled")

# Recommended ranges for the adaptive-momentum constants.
ZETA_RANGE = (0.85, 0.95)
DELTA_P_RANGE = (0.1, 0.6)

MU_LIMIT = 1e12


@dataclass(frozen=True)
class TrainerConfig:
    """Hyperparameters shared by the six trainers.

    eta scales the weight step of the gradient trainers; eta1 and eta2 scale
    the exogenous-rate and output-rate steps of ``gd_ext``.  mu0 and beta
    drive the damping schedule of the LM trainers; zeta and delta_p are the
    LM-AM constants (see ZETA_RANGE, DELTA_P_RANGE).  max_iters counts epochs
    (full passes over the data).  tolerance bounds the absolute change of
    the batch MSE between epochs.
    """

    algorithm: str = "gd"
    eta: float = 0.1
    eta1: float = 0.0
    eta2: float = 0.0
    mu0: float = 1e-3
    beta: float = 10.0
    zeta: float = 0.9
    delta_p: float = 0.5
    max_iters: int = 1000
    tolerance: float = 1e-8
    nonneg_policy: str = "clip_zero"
    line_search: str = "backtracking"
    rng_seed: int = 0
    init_range: tuple = (0.1, 1.0)
    r_output: float = 1.0
    loss_goal: Optional[float] = None
    stability_mode: str = "all"

    def __post_init__(self):
        object.__setattr__(self, "init_range", tuple(float(x) for x in self.init_range))
        self.validate()

    def validate(self):
        def need(ok, name, msg):
            if not ok:
                raise ConfigError(name, msg)

        need(self.algorithm in ALGORITHMS, "algorithm", f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        need(self.nonneg_policy in POLICIES, "nonneg_policy", f"unknown policy {self.nonneg_policy!r}; choose from {POLICIES}")
        need(self.line_search in LINE_SEARCHES, "line_search", f"unknown line search {self.line_search!r}")
        need(self.stability_mode in STABILITY_MODES, "stability_mode", f"must be one of {STABILITY_MODES}")
        # eta = 0 is allowed as a null step
        need(_num(self.eta) and 0.0 <= self.eta <= 1.0, "eta", "must lie in [0, 1]")
        need(_num(self.eta1) and self.eta1 >= 0, "eta1", "must be non-negative")
        need(_num(self.eta2) and self.eta2 >= 0, "eta2", "must be non-negative")
        need(_num(self.mu0) and self.mu0 > 0, "mu0", "must be positive")
        need(_num(self.beta) and self.beta > 1, "beta", "must exceed 1")
        need(_num(self.zeta) and 0 < self.zeta < 1, "zeta", "must lie in (0, 1)")
        need(_num(self.delta_p) and self.delta_p > 0, "delta_p", "must be positive")
        need(isinstance(self.max_iters, (int, np.integer)) and not isinstance(self.max_iters, bool)
             and self.max_iters >= 1, "max_iters", "must be a positive integer")
        need(_num(self.tolerance) and self.tolerance >= 0, "tolerance", "must be non-negative")
        need(isinstance(self.rng_seed, (int, np.integer)) and not isinstance(self.rng_seed, bool),
             "rng_seed", "must be an integer")
        need(len(self.init_range) == 2 and 0 <= self.init_range[0] <= self.init_range[1]
             and all(map(math.isfinite, self.init_range)), "init_range", "needs 0 <= w_lo <= w_hi")
        need(_num(self.r_output) and self.r_output > 0, "r_output", "must be positive")
        need(self.loss_goal is None or (_num(self.loss_goal) and self.loss_goal >= 0),
             "loss_goal", "must be non-negative or null")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["init_range"] = list(self.init_range)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainerConfig":
        if not isinstance(doc, dict):
            raise ConfigError("trainer", "must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(doc) - known)
        if extra:
            raise ConfigError(extra[0], "unknown trainer field")
        return cls(**doc)

    def replace(self, **changes) -> "TrainerConfig":
        return dataclasses.replace(self, **changes)


def _num(x) -> bool:
    return isinstance(x, (int, float, np.integer, np.floating)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass
class TrainReport:
    """Outcome of one training run.

    loss_trace[t] is the batch MSE after epoch t, so its length equals
    ``iterations``.  mu_trace[t] is the damping used in epoch t (LM only)
    and accepted[t] whether that epoch's step was kept.
    """

    algorithm: str
    loss_trace: list
    weights: np.ndarray
    iterations: int
    stop_reason: str
    initial_loss: float
    stability_warnings: list = field(default_factory=list)
    mu_trace: list = field(default_factory=list)
    accepted: list = field(default_factory=list)
    counters: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    spec: object = None

    def __post_init__(self):
        if self.stop_reason not in STOP_REASONS:
            raise ValueError(f"unknown stop reason {self.stop_reason!r}")

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else self.initial_loss

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "stop_reason": self.stop_reason,
            "iterations": int(self.iterations),
            "initial_loss": float(self.initial_loss),
            "final_loss": float(self.final_loss),
            "loss_trace": [float(x) for x in self.loss_trace],
            "mu_trace": [float(x) for x in self.mu_trace],
            "accepted": [bool(x) for x in self.accepted],
            "counters": {k: int(v) for k, v in sorted(self.counters.items())},
            "stability_warnings": list(self.stability_warnings),
            "weights": [float(x) for x in np.asarray(self.weights)],
            "config": self.config,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def loss_csv(self) -> str:
        """epoch,loss[,mu,accepted] with round-trip float formatting."""
        buf = io.StringIO()
        lm = bool(self.mu_trace)
        buf.write("epoch,loss,mu,accepted\n" if lm else "epoch,loss\n")
        for t, v in enumerate(self.loss_trace, start=1):
            if lm:
                buf.write(f"{t},{float(v)!r},{float(self.mu_trace[t - 1])!r},{int(self.accepted[t - 1])}\n")
            else:
                buf.write(f"{t},{float(v)!r}\n")
        return buf.getvalue()
