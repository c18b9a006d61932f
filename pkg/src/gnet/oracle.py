"""Independent ground truth for the analytic model.

Nothing here calls the fixed-point solver or the analytic derivatives: the
CTMC solver works from the queueing semantics alone (arrivals, services,
routing, negative customers destroying a positive one), and the gradients
come from central differences of the loss.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .core import NetworkSpec, solve
from .deriv import exogenous_slots
from .errors import (
    GuardError,
    InvalidInputError,
    InvalidParameterError,
    NonConvergenceError,
    NonErgodicError,
    SingularSystemError,
    TruncationError,
)

MAX_QUEUES = 4
MAX_STATES = 2_000_000
DEFAULT_CAP = 40
MASS_LIMIT = 1e-6
FD_SOLVE_TOL = 1e-14


def mm1_steady_state(lam, r, k) -> float:
    """P(k customers) in an M/M/1 queue with arrival rate lam and service rate r."""
    if not r > 0 or lam < 0:
        raise InvalidParameterError("need lam >= 0 and r > 0")
    load = lam / r
    if load >= 1:
        raise NonErgodicError(f"utilization {load:.6g} >= 1: the queue has no steady state")
    return load ** k * (1.0 - load)


def jackson_throughput(lambda_plus, routing) -> np.ndarray:
    """Solve the flow balance T_i = lambda_i + sum_j T_j p_ji."""
    lam = np.asarray(lambda_plus, dtype=float).reshape(-1)
    p = np.asarray(routing, dtype=float)
    n = lam.size
    if p.shape != (n, n):
        raise InvalidInputError(f"routing matrix must be {n}x{n}")
    if np.any(lam < 0) or not np.any(lam > 0):
        raise InvalidInputError("need non-negative arrival rates with at least one positive")
    if np.any(p < 0) or np.any(p.sum(axis=1) > 1 + 1e-12):
        raise InvalidInputError("routing rows must be substochastic")
    a = np.eye(n) - p.T
    if np.linalg.cond(a) > 1e12:
        raise SingularSystemError("flow balance equations are singular (closed or reducible routing)")
    t = np.linalg.solve(a, lam)
    if np.any(t <= 0):
        raise SingularSystemError(f"queues {np.flatnonzero(t <= 0).tolist()} receive no flow")
    return t


def jackson_from_network(spec: NetworkSpec, pattern=None) -> np.ndarray:
    """Throughputs of a network that has no negative customers at all."""
    lp, lm = spec.exogenous(pattern) if pattern is not None else (spec.lambda_plus, spec.lambda_minus)
    if np.any(spec.w_minus > 0) or np.any(lm > 0):
        raise InvalidInputError("Jackson flow equations need a network without negative customers")
    p_plus, _ = spec.routing()
    return jackson_throughput(lp, p_plus)


# -- truncated CTMC ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CtmcSpec:
    lambda_plus: np.ndarray
    lambda_minus: np.ndarray
    r: np.ndarray
    p_plus: np.ndarray
    p_minus: np.ndarray
    d: np.ndarray
    cap: int = DEFAULT_CAP

    def __post_init__(self):
        n = len(self.r)
        if n > MAX_QUEUES:
            raise GuardError(f"CTMC oracle supports at most {MAX_QUEUES} queues, got {n}")
        if (self.cap + 1) ** n > MAX_STATES:
            raise GuardError(f"(cap+1)^N = {(self.cap + 1) ** n} exceeds {MAX_STATES} states")
        if self.cap < 1:
            raise GuardError("truncation cap must be at least 1")

    @property
    def n(self) -> int:
        return len(self.r)

    @property
    def n_states(self) -> int:
        return (self.cap + 1) ** self.n

    @classmethod
    def from_network(cls, spec: NetworkSpec, pattern=None, cap=DEFAULT_CAP) -> "CtmcSpec":
        if pattern is None:
            lp, lm = spec.lambda_plus, spec.lambda_minus
        else:
            lp, lm = spec.exogenous(pattern)
        pp, pm = spec.routing()
        d = 1.0 - pp.sum(axis=1) - pm.sum(axis=1)
        return cls(np.asarray(lp, float), np.asarray(lm, float), spec.r.copy(), pp, pm,
                   np.clip(d, 0.0, 1.0), int(cap))

    def with_cap(self, cap) -> "CtmcSpec":
        return CtmcSpec(self.lambda_plus, self.lambda_minus, self.r, self.p_plus,
                        self.p_minus, self.d, int(cap))


@dataclass(frozen=True, eq=False)
class CtmcResult:
    joint: np.ndarray
    marginals: np.ndarray
    cap: int
    boundary_mass: float
    generator: Optional[sparse.csr_matrix] = None

    def queue_distribution(self, i) -> np.ndarray:
        axes = tuple(a for a in range(self.joint.ndim) if a != i)
        return self.joint.sum(axis=axes)


def build_generator(ctmc: CtmcSpec) -> sparse.csr_matrix:
    """Infinitesimal generator over the box {0..cap}^N.

    Positive customers that would exceed the cap are lost.  The diagonal is
    the negated sum of the off-diagonal rates, so every row sums to zero.
    """
    n, cap = ctmc.n, ctmc.cap
    shape = (cap + 1,) * n
    k = np.indices(shape).reshape(n, -1)
    idx = np.arange(k.shape[1])
    src, dst, rate = [], [], []

    def add(mask, target, rates):
        rates = np.broadcast_to(rates, mask.shape)
        sel = mask & (rates > 0)
        to = np.ravel_multi_index(target[:, sel], shape)
        keep = to != idx[sel]
        src.append(idx[sel][keep])
        dst.append(to[keep])
        rate.append(rates[sel][keep])

    for i in range(n):
        up = k.copy()
        up[i] += 1
        add(k[i] < cap, up, ctmc.lambda_plus[i])
        busy = k[i] > 0
        down = k.copy()
        down[i] -= 1
        add(busy, down, ctmc.lambda_minus[i])
        add(busy, down, ctmc.r[i] * ctmc.d[i])
        for j in range(n):
            if ctmc.p_plus[i, j] > 0:
                moved = down.copy()
                room = moved[j] < cap
                moved[j] = np.where(room, moved[j] + 1, moved[j])
                add(busy, moved, ctmc.r[i] * ctmc.p_plus[i, j])
            if ctmc.p_minus[i, j] > 0:
                hit = down.copy()
                hit[j] = np.maximum(hit[j] - 1, 0)
                add(busy, hit, ctmc.r[i] * ctmc.p_minus[i, j])

    src = np.concatenate(src) if src else np.zeros(0, int)
    dst = np.concatenate(dst) if dst else np.zeros(0, int)
    rate = np.concatenate(rate) if rate else np.zeros(0)
    size = k.shape[1]
    off = sparse.coo_matrix((rate, (src, dst)), shape=(size, size)).tocsr()
    off.sum_duplicates()
    diag = -np.asarray(off.sum(axis=1)).ravel()
    return (off + sparse.diags(diag)).tocsr()


def _stationary(q: sparse.csr_matrix) -> np.ndarray:
    size = q.shape[0]
    a = q.T.tolil()
    a[size - 1, :] = np.ones(size)
    b = np.zeros(size)
    b[-1] = 1.0
    pi = spsolve(a.tocsc(), b)
    if not np.all(np.isfinite(pi)):
        pi = _power_iteration(q)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def _power_iteration(q, tol=1e-14, max_iter=200_000):
    rate = float(np.max(-q.diagonal())) * 1.05 or 1.0
    pt = (sparse.eye(q.shape[0]) + q / rate).T.tocsr()
    pi = np.full(q.shape[0], 1.0 / q.shape[0])
    for _ in range(max_iter):
        nxt = pt @ pi
        if np.max(np.abs(nxt - pi)) < tol:
            return nxt
        pi = nxt
    return pi


def gnetwork_ctmc_steady(ctmc: CtmcSpec, tighten=True, keep_generator=False) -> CtmcResult:
    """Stationary distribution of the truncated G-network and its busy probabilities.

    Raises TruncationError when more than 1e-6 of the mass sits on the cap of
    some queue; with ``tighten`` the cap is doubled once before giving up.
    """
    q = build_generator(ctmc)
    pi = _stationary(q)
    joint = pi.reshape((ctmc.cap + 1,) * ctmc.n)
    boundary = max(float(np.take(joint, ctmc.cap, axis=i).sum()) for i in range(ctmc.n))
    if boundary > MASS_LIMIT:
        bigger = 2 * ctmc.cap
        if tighten and (bigger + 1) ** ctmc.n <= MAX_STATES:
            return gnetwork_ctmc_steady(ctmc.with_cap(bigger), tighten=False, keep_generator=keep_generator)
        raise TruncationError(f"{boundary:.3e} of the probability mass sits at cap {ctmc.cap}; "
                              f"increase the cap")
    marg = np.array([1.0 - float(np.take(joint, 0, axis=i).sum()) for i in range(ctmc.n)])
    return CtmcResult(joint, marg, ctmc.cap, boundary, q if keep_generator else None)


def product_form(rho, cap) -> np.ndarray:
    """prod_i rho_i^k_i (1 - rho_i) on the box {0..cap}^N."""
    rho = np.asarray(rho, dtype=float)
    k = np.arange(cap + 1)
    out = np.ones(())
    for r in rho:
        out = np.multiply.outer(out, r ** k * (1.0 - r))
    return out


def product_form_distance(result: CtmcResult, rho) -> float:
    """Total-variation distance between the CTMC joint law and the geometric product form."""
    return 0.5 * float(np.abs(result.joint - product_form(rho, result.cap)).sum())


# -- finite differences -----------------------------------------------------------

def _half_rss(spec, inputs, targets):
    out = spec.outputs
    total = 0.0
    for a, b in zip(inputs, targets):
        st = solve(spec, a, tol=FD_SOLVE_TOL, max_iter=1_000_000)
        total += float(np.sum((st.rho[out] - b) ** 2))
    return 0.5 * total


def _coordinate_setters(spec: NetworkSpec, params):
    """(name, value, rebuild) triples for every requested coordinate."""
    coords = []
    if "weights" in params:
        theta = spec.weights_flat()
        for m in range(theta.size):
            def rebuild(x, m=m):
                t = theta.copy()
                t[m] = x
                return spec.with_weights_flat(t)
            coords.append((f"weights[{m}]", theta[m], rebuild))
    for name in ("lambda_plus", "lambda_minus"):
        if name in params:
            base = getattr(spec, name)
            for i in exogenous_slots(spec):
                def rebuild(x, i=i, base=base, name=name):
                    v = base.copy()
                    v[i] = x
                    return spec.with_params(**{name: v})
                coords.append((f"{name}[{i}]", base[i], rebuild))
    if "r" in params:
        for i in spec.outputs:
            def rebuild(x, i=i):
                v = spec.r.copy()
                v[i] = x
                return spec.with_params(r=v)
            coords.append((f"r[{i}]", spec.r[i], rebuild))
    return coords


def finite_diff_gradient(spec: NetworkSpec, inputs, targets, h=1e-6, params=("weights",)) -> dict:
    """Central-difference gradient of 0.5 * RSS.

    Coordinates closer than h to zero use a step equal to their value, and
    coordinates at zero a one-sided three-point formula, so no perturbed
    parameter goes negative.  Returns one array per requested parameter group
    (weights, lambda_plus, lambda_minus, r), matching deriv.extended_gradient.
    """
    if not h > 0:
        raise InvalidParameterError("step must be positive")
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    groups = {p: [] for p in params}

    def f(s):
        return _half_rss(s, inputs, targets)

    for name, x, rebuild in _coordinate_setters(spec, params):
        try:
            if x >= h:
                g = (f(rebuild(x + h)) - f(rebuild(x - h))) / (2 * h)
            elif x > 0:
                g = (f(rebuild(2 * x)) - f(rebuild(0.0))) / (2 * x)
            else:
                g = (-3 * f(rebuild(0.0)) + 4 * f(rebuild(h)) - f(rebuild(2 * h))) / (2 * h)
        except NonConvergenceError as exc:
            raise NonConvergenceError(exc.residual, exc.iterations,
                                      f"solver did not converge when perturbing {name}") from exc
        groups[name.split("[")[0]].append(g)
    return {k: np.array(v) for k, v in groups.items()}


# -- random instances for gradient checks ------------------------------------------

def random_instance(seed, n=None, recurrent=None, samples=3, max_load=0.85, extended=False):
    """Random network plus a small dataset, with every neuron safely below saturation.

    Returns ``(spec, inputs, targets)``.  Recurrent instances get back edges
    and, sometimes, output neurons with outgoing edges.
    """
    rng = np.random.default_rng(seed)
    if recurrent is None:
        recurrent = bool(rng.integers(2))
    if n is None:
        n = int(rng.integers(3, 11))
    for _ in range(200):
        n_in = int(rng.integers(1, min(3, n - 1) + 1))
        n_out = int(rng.integers(1, min(3, n - n_in) + 1))
        roles = ["input"] * n_in + ["hidden"] * (n - n_in - n_out) + ["output"] * n_out
        is_out = np.array([r == "output" for r in roles])
        upper = np.triu(rng.random((n, n)) < 0.5, k=1)
        upper[:, :n_in] = False
        mask = upper.copy()
        if recurrent:
            back = np.tril(rng.random((n, n)) < 0.25, k=-1)
            back[:, :n_in] = False
            mask |= back
            mask[is_out] &= rng.random((n_out, n)) < 0.3
        else:
            mask[is_out] = False
        # every non-output neuron needs an outlet
        for i in np.flatnonzero(~is_out):
            if not mask[i].any():
                mask[i, rng.integers(max(i + 1, n_in), n)] = True
        wp = np.where(mask, rng.uniform(0.2, 1.0, (n, n)), 0.0)
        wm = np.where(mask, rng.uniform(0.2, 1.0, (n, n)), 0.0)
        out_mass = (wp + wm).sum(axis=1)
        r_out = np.where(is_out, out_mass + rng.uniform(0.5, 1.5, n), 1.0)
        lp = np.zeros(n)
        lm = np.zeros(n)
        if extended:
            lp[n_in:] = rng.uniform(0.0, 0.2, n - n_in)
            lm[n_in:] = rng.uniform(0.0, 0.2, n - n_in)
        spec = NetworkSpec.build(roles, wp, wm, r_output=r_out, lambda_plus=lp,
                                 lambda_minus=lm, mask=mask)
        inputs = rng.uniform(0.05, 1.0, (samples, n_in)) * spec.r[:n_in].min() * 0.5
        targets = rng.uniform(0.0, 1.0, (samples, n_out))
        try:
            loads = [st.t_plus / (spec.r + st.t_minus) for st in (solve(spec, a) for a in inputs)]
        except NonConvergenceError:
            continue
        if max(float(np.max(l)) for l in loads) < max_load:
            return spec, inputs, targets
    raise RuntimeError(f"could not draw an unsaturated instance for seed {seed}")
