"""Network data model and steady-state activity rates of a random neural network.

Weights follow the queueing convention: ``w_plus[i, j]`` is the rate at which
neuron ``i`` sends positive signals to neuron ``j`` (``w = r * p``).  Only the
weights and the output-neuron rates are free; rates of non-output neurons and
the departure probabilities ``d`` are always derived from them.
"""

from __future__ import annotations

import dataclasses
import graphlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateNeuronError,
    InvalidInputError,
    InvalidParameterError,
    NonConvergenceError,
    ShapeError,
    TopologyError,
)

ROLES = ("input", "hidden", "output", "input_output")
MODEL_VERSION = 1

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class Topology:
    """Neuron roles plus the mask of structurally present (trainable) edges."""

    roles: tuple
    mask: np.ndarray

    def __post_init__(self):
        roles = tuple(self.roles)
        bad = [r for r in roles if r not in ROLES]
        if bad:
            raise InvalidParameterError(f"unknown neuron roles {bad}; expected one of {ROLES}")
        mask = np.array(self.mask, dtype=bool)
        n = len(roles)
        if mask.shape != (n, n):
            raise ShapeError(f"edge mask has shape {mask.shape}, expected {(n, n)}")
        mask.setflags(write=False)
        object.__setattr__(self, "roles", roles)
        object.__setattr__(self, "mask", mask)

    @property
    def n(self) -> int:
        return len(self.roles)

    @cached_property
    def is_input(self) -> np.ndarray:
        return np.array([r in ("input", "input_output") for r in self.roles])

    @cached_property
    def is_output(self) -> np.ndarray:
        return np.array([r in ("output", "input_output") for r in self.roles])

    @cached_property
    def inputs(self) -> np.ndarray:
        return np.flatnonzero(self.is_input)

    @cached_property
    def outputs(self) -> np.ndarray:
        return np.flatnonzero(self.is_output)

    @cached_property
    def hidden(self) -> np.ndarray:
        return np.flatnonzero(~self.is_input & ~self.is_output)

    @cached_property
    def slots(self) -> tuple:
        """(u, v) index arrays of the trainable edges, row-major."""
        u, v = np.nonzero(self.mask)
        return u, v

    @property
    def n_slots(self) -> int:
        return len(self.slots[0])

    @cached_property
    def generations(self) -> Optional[list]:
        """Neurons grouped by topological depth, or None when the graph has a cycle."""
        sorter = graphlib.TopologicalSorter()
        for j in range(self.n):
            sorter.add(j, *np.flatnonzero(self.mask[:, j]).tolist())
        try:
            sorter.prepare()
        except graphlib.CycleError:
            return None
        gens = []
        while sorter.is_active():
            ready = sorted(sorter.get_ready())
            gens.append(np.array(ready, dtype=int))
            sorter.done(*ready)
        return gens

    @property
    def acyclic(self) -> bool:
        return self.generations is not None

    @cached_property
    def order(self) -> Optional[np.ndarray]:
        gens = self.generations
        return None if gens is None else np.concatenate(gens)


@dataclass(frozen=True, eq=False)
class NetworkSpec:
    """Parameters of one random neural network.

    Build instances with :meth:`NetworkSpec.build`, which derives ``r`` and
    ``d`` from the weights.  Arrays are read-only; parameter updates produce
    a new spec.
    """

    topology: Topology
    w_plus: np.ndarray
    w_minus: np.ndarray
    r: np.ndarray
    d: np.ndarray
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    controlled: bool = False

    def __post_init__(self):
        n = self.topology.n
        for name in ("w_plus", "w_minus"):
            a = np.array(getattr(self, name), dtype=float)
            if a.shape != (n, n):
                raise ShapeError(f"{name} has shape {a.shape}, expected {(n, n)}")
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise InvalidParameterError(f"{name} must be finite and non-negative")
            if np.any(a[~self.topology.mask] != 0):
                raise TopologyError(f"{name} has nonzero entries outside the edge mask")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        for name in ("r", "d", "lambda_plus", "lambda_minus"):
            a = np.array(getattr(self, name), dtype=float).reshape(-1)
            if a.shape != (n,):
                raise ShapeError(f"{name} has length {a.size}, expected {n}")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(~(self.r > 0)):
            raise InvalidParameterError("all service rates must be strictly positive")
        if np.any(self.lambda_plus < 0) or np.any(self.lambda_minus < 0):
            raise InvalidParameterError("exogenous signal rates must be non-negative")

    @classmethod
    def build(cls, roles, w_plus, w_minus, r_output=1.0, lambda_plus=None, lambda_minus=None,
              mask=None, controlled=False, **derive_kw) -> "NetworkSpec":
        """Assemble a spec from weights and output rates; derives every other rate."""
        w_plus = np.asarray(w_plus, dtype=float)
        w_minus = np.asarray(w_minus, dtype=float)
        if isinstance(roles, Topology):
            topo = roles
        else:
            if mask is None:
                mask = (w_plus != 0) | (w_minus != 0)
            topo = Topology(tuple(roles), mask)
        n = topo.n
        r = np.ones(n)
        ro = np.asarray(r_output, dtype=float).reshape(-1)
        if ro.size == 1:
            r[topo.is_output] = ro[0]
        elif ro.size == n:
            r[topo.is_output] = ro[topo.is_output]
        elif ro.size == len(topo.outputs):
            r[topo.outputs] = ro
        else:
            raise ShapeError(f"r_output has {ro.size} entries; expected 1, {len(topo.outputs)} or {n}")
        zeros = np.zeros(n)
        spec = cls(topo, w_plus, w_minus, r, zeros,
                   zeros if lambda_plus is None else lambda_plus,
                   zeros if lambda_minus is None else lambda_minus,
                   controlled)
        return derive_rates(spec, **derive_kw)

    @property
    def n(self) -> int:
        return self.topology.n

    @property
    def roles(self) -> tuple:
        return self.topology.roles

    @property
    def inputs(self) -> np.ndarray:
        return self.topology.inputs

    @property
    def outputs(self) -> np.ndarray:
        return self.topology.outputs

    @property
    def hidden(self) -> np.ndarray:
        return self.topology.hidden

    @property
    def n_inputs(self) -> int:
        return len(self.topology.inputs)

    @property
    def n_outputs(self) -> int:
        return len(self.topology.outputs)

    @property
    def n_params(self) -> int:
        return 2 * self.topology.n_slots

    def routing(self):
        """Routing probabilities ``(p_plus, p_minus)`` recovered as ``w / r``."""
        return self.w_plus / self.r[:, None], self.w_minus / self.r[:, None]

    def weights_flat(self) -> np.ndarray:
        """All trainable w+ slots (row-major) followed by all w- slots."""
        m = self.topology.mask
        return np.concatenate([self.w_plus[m], self.w_minus[m]])

    def with_weights_flat(self, theta, **derive_kw) -> "NetworkSpec":
        theta = np.asarray(theta, dtype=float)
        k = self.topology.n_slots
        if theta.shape != (2 * k,):
            raise ShapeError(f"weight vector has shape {theta.shape}, expected {(2 * k,)}")
        wp = np.zeros((self.n, self.n))
        wm = np.zeros((self.n, self.n))
        m = self.topology.mask
        wp[m] = theta[:k]
        wm[m] = theta[k:]
        return self.with_params(w_plus=wp, w_minus=wm, **derive_kw)

    def with_params(self, derive=True, **changes) -> "NetworkSpec":
        """Copy with some fields replaced; rates and ``d`` are re-derived by default."""
        derive_kw = {k: changes.pop(k) for k in ("rate_floor", "lift_output_rates") if k in changes}
        spec = dataclasses.replace(self, **changes)
        return derive_rates(spec, **derive_kw) if derive else spec

    def exogenous(self, pattern):
        """Exogenous rates with the pattern loaded on the positive port of the input neurons."""
        pattern = np.asarray(pattern, dtype=float).reshape(-1)
        if pattern.size != self.n_inputs:
            raise ShapeError(f"input pattern has {pattern.size} entries, network has {self.n_inputs} inputs")
        if not np.all(np.isfinite(pattern)) or np.any(pattern < 0):
            raise InvalidInputError("input pattern must be finite and non-negative")
        lp = self.lambda_plus.copy()
        lp[self.inputs] = pattern
        return lp, self.lambda_minus.copy()


@dataclass(frozen=True, eq=False)
class ActivityState:
    rho: np.ndarray
    t_plus: np.ndarray
    t_minus: np.ndarray
    saturated: frozenset = field(default_factory=frozenset)
    residual: float = 0.0
    iterations: int = 0

    @property
    def saturated_mask(self) -> np.ndarray:
        mask = np.zeros(len(self.rho), dtype=bool)
        mask[list(self.saturated)] = True
        return mask


class NeuronOutput(NamedTuple):
    z: float
    saturated: bool


def neuron_output(x, y, r, controlled=False) -> NeuronOutput:
    """Output of a single random neuron with excitatory input x, inhibitory input y and rate r."""
    if not r > 0:
        raise InvalidParameterError(f"neuron rate must be positive, got {r}")
    if x < 0 or y < 0:
        raise InvalidParameterError("neuron inputs must be non-negative")
    load = x / (r + y)
    if controlled:
        load = min(load, 1.0)
    return NeuronOutput(load * r, x >= r + y)


def derive_rates(spec: NetworkSpec, rate_floor=None, lift_output_rates=False) -> NetworkSpec:
    """Recompute rates of non-output neurons and the departure probabilities.

    Non-output neurons never leave the network (d = 0), so their rate equals
    their total outgoing weight.  Output rates are kept and d is solved for.

    rate_floor: replaces a zero rate instead of raising (used while training,
        when every outgoing weight of a neuron has been clipped to zero).
    lift_output_rates: raise an output rate to keep ``d > 0`` when its
        outgoing weights would exceed it.
    """
    out_mass = spec.w_plus.sum(axis=1) + spec.w_minus.sum(axis=1)
    is_out = spec.topology.is_output
    r = spec.r.copy()
    d = np.zeros(spec.n)
    for i in np.flatnonzero(~is_out):
        if out_mass[i] > 0:
            r[i] = out_mass[i]
        elif rate_floor is not None:
            r[i] = rate_floor
        else:
            raise DegenerateNeuronError(i)
    for i in np.flatnonzero(is_out):
        if lift_output_rates and out_mass[i] >= r[i]:
            r[i] = out_mass[i] / (1.0 - 1e-6)
        if out_mass[i] >= r[i]:
            raise InvalidParameterError(
                f"output neuron {i} has outgoing weight {out_mass[i]:.6g} >= its rate {r[i]:.6g}")
        d[i] = 1.0 - out_mass[i] / r[i]
    return dataclasses.replace(spec, r=r, d=d)


def _defect(rho, t_plus, t_minus, r, saturated):
    free = ~saturated
    if not np.any(free):
        return 0.0
    return float(np.max(np.abs(rho[free] * (r[free] + t_minus[free]) - t_plus[free])))


def solve_feedforward(spec: NetworkSpec, pattern) -> ActivityState:
    """One forward sweep over the topological layers of an acyclic network."""
    gens = spec.topology.generations
    if gens is None:
        raise TopologyError("network has a cycle; use solve_fixed_point")
    lp, lm = spec.exogenous(pattern)
    rho = np.zeros(spec.n)
    tp = lp.copy()
    tm = lm.copy()
    sat = np.zeros(spec.n, dtype=bool)
    for g in gens:
        # not-yet-computed neurons still have rho = 0, so full columns are safe
        tp[g] = lp[g] + rho @ spec.w_plus[:, g]
        tm[g] = lm[g] + rho @ spec.w_minus[:, g]
        raw = tp[g] / (spec.r[g] + tm[g])
        sat[g] = raw >= 1.0
        rho[g] = np.minimum(raw, 1.0)
    return ActivityState(rho, tp, tm, frozenset(np.flatnonzero(sat).tolist()),
                         _defect(rho, tp, tm, spec.r, sat), len(gens))


def solve_fixed_point(spec: NetworkSpec, pattern, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER,
                      damping=0.0, rho0=None) -> ActivityState:
    """Successive substitution on (T+, T-, rho) starting from rho = 0.

    damping in [0, 1) blends the previous iterate into each update.
    """
    if not tol > 0:
        raise InvalidParameterError("tol must be positive")
    if not 0.0 <= damping < 1.0:
        raise InvalidParameterError("damping must lie in [0, 1)")
    lp, lm = spec.exogenous(pattern)
    wpt = spec.w_plus.T
    wmt = spec.w_minus.T
    r = spec.r
    rho = np.zeros(spec.n) if rho0 is None else np.minimum(np.asarray(rho0, dtype=float), 1.0)
    for it in range(1, max_iter + 1):
        tp = lp + wpt @ rho
        tm = lm + wmt @ rho
        new = np.minimum(tp / (r + tm), 1.0)
        if damping:
            new = (1.0 - damping) * new + damping * rho
        change = np.max(np.abs(new - rho)) if spec.n else 0.0
        rho = new
        if change < tol:
            break
    else:
        tp = lp + wpt @ rho
        tm = lm + wmt @ rho
        raw = tp / (r + tm)
        raise NonConvergenceError(_defect(rho, tp, tm, r, raw >= 1.0), max_iter)
    tp = lp + wpt @ rho
    tm = lm + wmt @ rho
    sat = tp / (r + tm) >= 1.0
    return ActivityState(rho, tp, tm, frozenset(np.flatnonzero(sat).tolist()),
                         _defect(rho, tp, tm, r, sat), it)


def solve(spec: NetworkSpec, pattern, tol=DEFAULT_TOL, max_iter=DEFAULT_MAX_ITER) -> ActivityState:
    """Explicit sweep for acyclic networks, fixed-point iteration otherwise."""
    if spec.topology.acyclic:
        return solve_feedforward(spec, pattern)
    return solve_fixed_point(spec, pattern, tol=tol, max_iter=max_iter)


class StabilityReport(NamedTuple):
    stable: bool
    per_neuron: np.ndarray
    checked: np.ndarray

    def unstable_neurons(self) -> list:
        return [int(i) for i in self.checked if not self.per_neuron[i]]


def check_stability(state: ActivityState, spec: NetworkSpec, mode="all", margin=1e-8) -> StabilityReport:
    """Queue i is stable when T+_i < r_i + T-_i.

    mode="outputs" restricts the verdict to the output neurons.  The relative
    margin treats a load within ``margin`` of 1 as unstable, since fixed-point
    iteration only approaches a saturating load from below.
    """
    per = state.t_plus < (spec.r + state.t_minus) * (1.0 - margin)
    if mode == "all":
        checked = np.arange(spec.n)
    elif mode == "outputs":
        checked = spec.outputs
    else:
        raise InvalidParameterError(f"unknown stability mode {mode!r}")
    return StabilityReport(bool(np.all(per[checked])), per, checked)


def layered_network(sizes: Sequence[int], rng=None, init_range=(0.1, 1.0), r_output=1.0,
                    **derive_kw) -> NetworkSpec:
    """Fully connected feedforward net; neurons indexed input, hidden..., output."""
    sizes = [int(s) for s in sizes]
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise InvalidParameterError(f"layer sizes must be positive and at least two layers, got {sizes}")
    rng = np.random.default_rng(rng)
    n = sum(sizes)
    bounds = np.cumsum([0] + sizes)
    mask = np.zeros((n, n), dtype=bool)
    for a, b, c in zip(bounds[:-2], bounds[1:-1], bounds[2:]):
        mask[a:b, b:c] = True
    roles = ["input"] * sizes[0] + ["hidden"] * (n - sizes[0] - sizes[-1]) + ["output"] * sizes[-1]
    lo, hi = init_range
    wp = np.where(mask, rng.uniform(lo, hi, (n, n)), 0.0)
    wm = np.where(mask, rng.uniform(lo, hi, (n, n)), 0.0)
    return NetworkSpec.build(roles, wp, wm, r_output=r_output, mask=mask, **derive_kw)


def convert_ann(ann_weights, thresholds, roles, cut_points=None, r_output=1.0):
    """Map a signed feedforward network onto a random neural network.

    Positive weights become excitatory, negative ones inhibitory with the same
    magnitude.  A positive threshold becomes an inhibitory exogenous rate; a
    negative one an excitatory rate.  Returns ``(spec, cut_points)``; decode
    with :func:`decode_binary`.
    """
    w = np.asarray(ann_weights, dtype=float)
    theta = np.asarray(thresholds, dtype=float).reshape(-1)
    n = len(roles)
    if w.shape != (n, n) or theta.shape != (n,):
        raise ShapeError(f"expected {n}x{n} weights and {n} thresholds")
    mask = w != 0
    topo = Topology(tuple(roles), mask)
    if not topo.acyclic or np.any(np.diag(mask)):
        raise TopologyError("ANN conversion requires a feedforward network")
    if np.any(mask[topo.is_output]):
        raise TopologyError("output neurons of a feedforward ANN cannot have outgoing weights")
    wp = np.where(w > 0, w, 0.0)
    wm = np.where(w < 0, -w, 0.0)
    lam_minus = np.where(theta > 0, theta, 0.0)
    lam_plus = np.where(theta < 0, -theta, 0.0)
    lam_plus[topo.inputs] = 0.0
    spec = NetworkSpec.build(topo, wp, wm, r_output=r_output,
                             lambda_plus=lam_plus, lambda_minus=lam_minus)
    if cut_points is None:
        cut_points = np.full(n, 0.5)
    return spec, np.asarray(cut_points, dtype=float)


def decode_binary(rho, cut_points) -> np.ndarray:
    """Binary readout: 1 where rho_i > 1 - alpha_i."""
    return (np.asarray(rho) > 1.0 - np.asarray(cut_points)).astype(int)


# -- serialization ------------------------------------------------------------------

def spec_to_dict(spec: NetworkSpec, normalization=None) -> dict:
    out = spec.outputs
    return {
        "version": MODEL_VERSION,
        "kind": "rnn",
        "n": spec.n,
        "roles": list(spec.roles),
        "mask": spec.topology.mask.astype(int).tolist(),
        "w_plus": spec.w_plus.tolist(),
        "w_minus": spec.w_minus.tolist(),
        "r_output": spec.r[out].tolist(),
        "lambda_plus_defaults": spec.lambda_plus.tolist(),
        "lambda_minus_defaults": spec.lambda_minus.tolist(),
        "controlled": bool(spec.controlled),
        "weight_order": "w_plus mask slots row-major, then w_minus mask slots row-major",
        "normalization": normalization,
    }


def spec_from_dict(doc: dict) -> NetworkSpec:
    if doc.get("version") != MODEL_VERSION:
        raise InvalidParameterError(f"unsupported model version {doc.get('version')!r}")
    roles = doc["roles"]
    n = doc["n"]
    if len(roles) != n:
        raise ShapeError(f"model lists {len(roles)} roles for n={n}")
    topo = Topology(tuple(roles), np.array(doc["mask"], dtype=bool))
    r_out = np.ones(n)
    r_out[topo.outputs] = doc["r_output"]
    return NetworkSpec.build(topo, doc["w_plus"], doc["w_minus"], r_output=r_out,
                             lambda_plus=doc.get("lambda_plus_defaults"),
                             lambda_minus=doc.get("lambda_minus_defaults"),
                             controlled=doc.get("controlled", False), rate_floor=1e-9)
