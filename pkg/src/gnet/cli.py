"""Command-line entry point: train, eval, predict, gen, oracle.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Experiments are driven by one JSON run config; flags only pick paths, the
seed and verbosity.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .core import NetworkSpec, layered_network, solve, spec_from_dict, spec_to_dict
from .data import (
    Dataset,
    MinMaxScaler,
    gen_task,
    lag_matrix,
    load_csv,
    load_series,
    metrics,
    noisy_sine_series,
    read_table,
    window_series,
)
from .errors import ConfigError, GNetError, GuardError, ParseError, ShapeError
from .esqn import (
    DEFAULT_DENSITY,
    DEFAULT_RIDGE,
    DEFAULT_WASHOUT,
    EsqnModel,
    esqn_predict,
    holdout_nmse,
    summarize_trials,
)
from .io import atomic_write_text, read_json, write_json
from .optim import TrainerConfig, train
from .optim.common import batch_forward

log = logging.getLogger("gnet")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

RUN_FIELDS = ("seed", "task", "dataset", "network", "trainer", "esqn", "outputs")
ESQN_DEFAULTS = {
    "n_hidden": 50, "lag": 8, "horizon": 1, "density": DEFAULT_DENSITY, "margin": 1.2,
    "w_max": 1.0, "ridge_lambda": DEFAULT_RIDGE, "washout": DEFAULT_WASHOUT,
    "train_fraction": 0.7, "trials": 1,
}
TASK_KINDS = ("xor", "parity", "sine", "noisy_sine")


class UsageError(Exception):
    """Bad invocation, config or input file; maps to exit code 2."""


# -- run config ----------------------------------------------------------------

@dataclass
class RunConfig:
    seed: int = 0
    task: Optional[dict] = None
    dataset: Optional[dict] = None
    network: Optional[dict] = None
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    esqn: Optional[dict] = None
    outputs: dict = field(default_factory=lambda: {"dir": "run", "plots": True})
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, doc, base_dir=".") -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("<root>", "run config must be a JSON object")
        extra = sorted(set(doc) - set(RUN_FIELDS))
        if extra:
            raise ConfigError(extra[0], f"unknown field; expected some of {RUN_FIELDS}")
        seed = doc.get("seed", 0)
        if not isinstance(seed, int) or isinstance(seed, bool):
            raise ConfigError("seed", "must be an integer")
        if ("task" in doc) == ("dataset" in doc):
            raise ConfigError("task", "give exactly one of 'task' and 'dataset'")
        task = _task_block(doc["task"]) if "task" in doc else None
        dataset = _dataset_block(doc["dataset"]) if "dataset" in doc else None
        trainer_doc = doc.get("trainer", {})
        if not isinstance(trainer_doc, dict):
            raise ConfigError("trainer", "must be a JSON object")
        trainer_doc = dict(trainer_doc)
        trainer_doc.setdefault("rng_seed", seed)
        try:
            trainer = TrainerConfig.from_dict(trainer_doc)
        except TypeError as exc:
            raise ConfigError("trainer", str(exc)) from None
        esqn = _esqn_block(doc["esqn"]) if doc.get("esqn") is not None else None
        network = doc.get("network")
        if esqn is None:
            if network is None:
                raise ConfigError("network", "required unless an 'esqn' block is given")
            _check_network(network)
            if task is not None and task["kind"] == "noisy_sine":
                raise ConfigError("task.kind", "noisy_sine is a series; it needs an 'esqn' block")
        elif task is not None and task["kind"] != "noisy_sine":
            raise ConfigError("task.kind", "an 'esqn' run needs a series task (noisy_sine) or dataset")
        outputs = {"dir": "run", "plots": True}
        out_doc = doc.get("outputs", {})
        if not isinstance(out_doc, dict) or set(out_doc) - {"dir", "plots"}:
            raise ConfigError("outputs", "expects an object with 'dir' and 'plots'")
        outputs.update(out_doc)
        if not isinstance(outputs["plots"], bool):
            raise ConfigError("outputs.plots", "must be true or false")
        return cls(seed, task, dataset, network, trainer, esqn, outputs, Path(base_dir))

    def with_seed(self, seed) -> "RunConfig":
        rc = RunConfig(**{k: getattr(self, k) for k in self.__dataclass_fields__})
        rc.seed = seed
        rc.trainer = self.trainer.replace(rng_seed=seed)
        return rc

    def to_dict(self) -> dict:
        out = {"seed": self.seed}
        if self.task is not None:
            out["task"] = self.task
        if self.dataset is not None:
            out["dataset"] = self.dataset
        if self.network is not None:
            out["network"] = self.network
        out["trainer"] = self.trainer.to_dict()
        if self.esqn is not None:
            out["esqn"] = self.esqn
        out["outputs"] = self.outputs
        return out

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _task_block(doc) -> dict:
    if isinstance(doc, str):
        doc = {"kind": doc}
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ConfigError("task", "must be a task name or an object with 'kind'")
    if doc["kind"] not in TASK_KINDS:
        raise ConfigError("task.kind", f"unknown task {doc['kind']!r}; choose from {TASK_KINDS}")
    allowed = {"kind", "n", "samples", "length", "period", "noise"}
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"task.{extra[0]}", "unknown field")
    return dict(doc)


def _dataset_block(doc) -> dict:
    if isinstance(doc, str):
        doc = {"path": doc}
    if not isinstance(doc, dict) or "path" not in doc:
        raise ConfigError("dataset", "must be a path or an object with 'path'")
    allowed = {"path", "input_columns", "target_columns", "normalize", "column"}
    extra = sorted(set(doc) - allowed)
    if extra:
        raise ConfigError(f"dataset.{extra[0]}", "unknown field")
    return dict(doc)


def _esqn_block(doc) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("esqn", "must be a JSON object")
    extra = sorted(set(doc) - set(ESQN_DEFAULTS))
    if extra:
        raise ConfigError(f"esqn.{extra[0]}", "unknown field")
    out = {**ESQN_DEFAULTS, **doc}
    for k in ("n_hidden", "lag", "horizon", "trials"):
        if not isinstance(out[k], int) or isinstance(out[k], bool) or out[k] < 1:
            raise ConfigError(f"esqn.{k}", "must be a positive integer")
    if not 0 < out["train_fraction"] < 1:
        raise ConfigError("esqn.train_fraction", "must lie in (0, 1)")
    return out


def _check_network(doc):
    if not isinstance(doc, dict):
        raise ConfigError("network", "must be a JSON object")
    if "layers" in doc:
        layers = doc["layers"]
        if (not isinstance(layers, list) or len(layers) < 2
                or not all(isinstance(s, int) and not isinstance(s, bool) and s > 0 for s in layers)):
            raise ConfigError("network.layers", "needs at least two positive integer layer sizes")
    elif "edges" in doc:
        if not isinstance(doc.get("roles"), list):
            raise ConfigError("network.roles", "an edge list needs a 'roles' list")
        for e in doc["edges"]:
            if not isinstance(e, list) or len(e) not in (2, 4):
                raise ConfigError("network.edges", "each edge is [u, v] or [u, v, w_plus, w_minus]")
    else:
        raise ConfigError("network", "give 'layers' or 'roles' plus 'edges'")
    extra = sorted(set(doc) - {"layers", "roles", "edges", "r_output"})
    if extra:
        raise ConfigError(f"network.{extra[0]}", "unknown field")


def load_run_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return RunConfig.from_dict(doc, path.parent)
    except ConfigError as exc:
        raise UsageError(f"{path}: field {exc}") from None


# -- builders ------------------------------------------------------------------------

def build_network(doc, trainer: TrainerConfig, n_inputs=None, n_outputs=None) -> NetworkSpec:
    rng = np.random.default_rng(trainer.rng_seed)
    r_out = doc.get("r_output", trainer.r_output)
    if "layers" in doc:
        sizes = doc["layers"]
        if n_inputs is not None and sizes[0] != n_inputs:
            raise ConfigError("network.layers", f"first layer has {sizes[0]} neurons, data has {n_inputs} inputs")
        if n_outputs is not None and sizes[-1] != n_outputs:
            raise ConfigError("network.layers", f"last layer has {sizes[-1]} neurons, data has {n_outputs} targets")
        return layered_network(sizes, rng, trainer.init_range, r_output=r_out)
    roles = doc["roles"]
    n = len(roles)
    wp = np.zeros((n, n))
    wm = np.zeros((n, n))
    mask = np.zeros((n, n), dtype=bool)
    lo, hi = trainer.init_range
    for e in doc["edges"]:
        u, v = int(e[0]), int(e[1])
        if not (0 <= u < n and 0 <= v < n):
            raise ConfigError("network.edges", f"edge {e} refers to a neuron outside 0..{n - 1}")
        mask[u, v] = True
        if len(e) == 4:
            wp[u, v], wm[u, v] = float(e[2]), float(e[3])
        else:
            wp[u, v], wm[u, v] = rng.uniform(lo, hi, 2)
    spec = NetworkSpec.build(roles, wp, wm, r_output=r_out, mask=mask)
    if n_inputs is not None and spec.n_inputs != n_inputs:
        raise ConfigError("network.roles", f"{spec.n_inputs} input neurons, data has {n_inputs} inputs")
    if n_outputs is not None and spec.n_outputs != n_outputs:
        raise ConfigError("network.roles", f"{spec.n_outputs} output neurons, data has {n_outputs} targets")
    return spec


def build_dataset(rc: RunConfig) -> Dataset:
    if rc.task is not None:
        t = rc.task
        return gen_task(t["kind"], seed=rc.seed, n=t.get("n"), samples=t.get("samples"))
    d = rc.dataset
    return load_csv(rc.resolve(d["path"]), d.get("input_columns"), d.get("target_columns"),
                    normalize=bool(d.get("normalize", False)))


def build_series(rc: RunConfig) -> np.ndarray:
    if rc.task is not None:
        t = rc.task
        return noisy_sine_series(t.get("length", 1000), t.get("period", 25.0), t.get("noise", 0.1), seed=rc.seed)
    return load_series(rc.resolve(rc.dataset["path"]), rc.dataset.get("column"))


# -- train ---------------------------------------------------------------------------

def _progress(every=100):
    def cb(epoch, info):
        if epoch % every == 0 and "loss" in info:
            log.info("epoch %d: mse %.6g", epoch, info["loss"])
    return cb


def cmd_train(args) -> int:
    rc = load_run_config(args.config)
    if args.seed is not None:
        rc = rc.with_seed(args.seed)
    out = Path(args.out) if args.out else rc.resolve(rc.outputs["dir"])
    if rc.esqn is not None:
        return _train_esqn(rc, out)
    try:
        data = build_dataset(rc)
        spec = build_network(rc.network, rc.trainer, data.n_inputs, data.n_outputs)
    except (ConfigError, GNetError) as exc:
        raise UsageError(str(exc)) from None
    log.info("training %s on %d samples, %d weights", rc.trainer.algorithm, data.k, spec.n_params)
    report = train(spec, data, rc.trainer, callback=_progress() if log.isEnabledFor(logging.INFO) else None)
    model = spec_to_dict(report.spec, data.normalization())
    doc = report.to_dict()
    doc["run_config"] = rc.to_dict()
    write_json(out / "model.json", model)
    write_json(out / "report.json", doc)
    atomic_write_text(out / "loss.csv", report.loss_csv())
    if rc.outputs["plots"] and report.loss_trace:
        from .plotting import plot_loss
        plot_loss(report, out / "loss.png")
    print(f"{report.algorithm}: stop={report.stop_reason} epochs={report.iterations} "
          f"mse={report.final_loss:.6g} -> {out}")
    return EXIT_OK


def _train_esqn(rc: RunConfig, out: Path) -> int:
    e = rc.esqn
    try:
        series = build_series(rc)
        ds = window_series(series, e["lag"], e["horizon"])
    except GNetError as exc:
        raise UsageError(str(exc)) from None
    kw = {k: e[k] for k in ("density", "margin", "w_max", "ridge_lambda", "washout")}
    res = holdout_nmse(ds, e["n_hidden"], seed=rc.seed, train_fraction=e["train_fraction"], **kw)
    model = res["model"]
    cut = int(round(e["train_fraction"] * ds.k))
    report = {"kind": "esqn", "seed": rc.seed, "nmse_esqn": res["esqn"], "nmse_linear": res["linear"],
              "train_rows": cut, "test_rows": ds.k - cut, "run_config": rc.to_dict()}
    rows = []
    if e["trials"] > 1:
        seeds = range(rc.seed, rc.seed + e["trials"])
        # a generated series is redrawn per trial; a file series only changes the reservoir
        scores = [holdout_nmse(_trial_windows(rc, s, ds), e["n_hidden"], seed=s,
                               train_fraction=e["train_fraction"], **kw) for s in seeds]
        esqn_sum = summarize_trials([s["esqn"] for s in scores])
        lin = summarize_trials([s["linear"] for s in scores])
        report["trials"] = {"seeds": list(seeds), "esqn": list(esqn_sum.values), "linear": list(lin.values),
                            "esqn_mean": esqn_sum.mean, "esqn_ci": esqn_sum.half_width,
                            "linear_mean": lin.mean, "linear_ci": lin.half_width,
                            "confidence": esqn_sum.confidence}
        rows = ["model\tNMSE\tCI", esqn_sum.row("ESQN"), lin.row("Linear")]
    doc = model.to_dict()
    doc.update({"lag": e["lag"], "horizon": e["horizon"],
                "normalization": {"series": ds.target_scaler.to_dict()}})
    pred = esqn_predict(model, ds.inputs).predictions
    buf = io.StringIO()
    buf.write("row,target,prediction,split\n")
    for t, (b, p) in enumerate(zip(ds.targets.ravel(), pred.ravel())):
        buf.write(f"{t},{float(b)!r},{float(p)!r},{'train' if t < cut else 'test'}\n")
    write_json(out / "model.json", doc)
    write_json(out / "report.json", report)
    atomic_write_text(out / "predictions.csv", buf.getvalue())
    if rc.outputs["plots"]:
        from .plotting import plot_prediction
        plot_prediction(ds.targets, pred, out / "prediction.png", cut=cut)
    for line in rows:
        print(line)
    print(f"esqn: nmse={res['esqn']:.6g} linear={res['linear']:.6g} -> {out}")
    return EXIT_OK


def _trial_windows(rc: RunConfig, seed, ds):
    if rc.task is None or seed == rc.seed:
        return ds
    return window_series(build_series(rc.with_seed(seed)), rc.esqn["lag"], rc.esqn["horizon"])


# -- eval / predict ------------------------------------------------------------------------

def _load_model(path):
    try:
        doc = read_json(path)
    except OSError as exc:
        raise UsageError(f"cannot read model {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    kind = doc.get("kind") if isinstance(doc, dict) else None
    try:
        if kind == "rnn":
            return kind, doc, spec_from_dict(doc)
        if kind == "esqn":
            return kind, doc, EsqnModel.from_dict(doc)
    except (GNetError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: malformed model: {exc}") from None
    raise UsageError(f"{path}: not a gnet model (kind {kind!r})")


def _rnn_arrays(doc, spec, path, need_targets):
    """Inputs (and targets) from a CSV, mapped through the model's stored normalization."""
    header, data = read_table(path)
    norm = doc.get("normalization") or {}
    in_cols = norm.get("input_columns")
    tg_cols = norm.get("target_columns")
    if in_cols and all(c in header for c in in_cols):
        extra = [c for c in header if c not in in_cols and c not in (tg_cols or ())]
        if extra:
            raise ShapeError(f"data has columns {header}; model needs I={spec.n_inputs} inputs {in_cols} "
                             f"and O={spec.n_outputs} targets {tg_cols}, not {extra}")
        a = data[:, [header.index(c) for c in in_cols]]
    else:
        width = len(header) - (spec.n_outputs if need_targets else 0)
        if width != spec.n_inputs:
            raise ShapeError(f"data has {len(header)} columns {header}; model needs I={spec.n_inputs} "
                             f"inputs{f' plus O={spec.n_outputs} targets' if need_targets else ''}")
        a = data[:, :spec.n_inputs]
    if norm.get("inputs"):
        a = MinMaxScaler.from_dict(norm["inputs"]).transform(a)
    b = None
    if need_targets:
        if tg_cols and all(c in header for c in tg_cols):
            b = data[:, [header.index(c) for c in tg_cols]]
        else:
            b = data[:, -spec.n_outputs:]
        if norm.get("targets"):
            b = MinMaxScaler.from_dict(norm["targets"]).transform(b)
    return a, b


def _esqn_arrays(doc, path):
    series = load_series(path, doc.get("series_column"))
    scaler = MinMaxScaler.from_dict(doc["normalization"]["series"])
    x = scaler.transform(series[:, None]).ravel()
    a, b = lag_matrix(x, doc["lag"], doc["horizon"])
    return a, b, scaler


def cmd_eval(args) -> int:
    kind, doc, model = _load_model(args.model)
    try:
        if kind == "rnn":
            a, b = _rnn_arrays(doc, model, args.data, need_targets=True)
        else:
            a, b, _ = _esqn_arrays(doc, args.data)
    except ParseError as exc:
        raise UsageError(str(exc)) from None
    if kind == "rnn":
        pred = batch_forward(model, (a, b))[:, model.outputs]
        result = metrics(pred, b)
    else:
        if a.shape[1] != model.n_inputs:
            raise ShapeError(f"windows have I={a.shape[1]} inputs, reservoir has I={model.n_inputs}")
        pred = esqn_predict(model, a).predictions
        w = min(model.washout, a.shape[0] - 1)
        result = metrics(pred[w:], b[w:])
    result = {"kind": kind, "samples": int(a.shape[0]), **result}
    text = json.dumps(result, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_predict(args) -> int:
    kind, doc, model = _load_model(args.model)
    buf = io.StringIO()
    try:
        if kind == "rnn":
            a, _ = _rnn_arrays(doc, model, args.data, need_targets=False)
        else:
            a, b, scaler = _esqn_arrays(doc, args.data)
    except ParseError as exc:
        raise UsageError(str(exc)) from None
    if kind == "rnn":
        pred = batch_forward(model, (a, np.zeros((a.shape[0], model.n_outputs))))[:, model.outputs]
        norm = doc.get("normalization") or {}
        if norm.get("targets"):
            pred = MinMaxScaler.from_dict(norm["targets"]).inverse(pred)
        names = norm.get("target_columns") or [f"y{i + 1}" for i in range(model.n_outputs)]
        buf.write(",".join(names) + "\n")
        for row in pred:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
    else:
        pred = scaler.inverse(esqn_predict(model, a).predictions)
        target = scaler.inverse(b)
        # warm = 0 marks washout rows, predicted from a cold reservoir
        buf.write("row,target,prediction,warm\n")
        for t, (y, p) in enumerate(zip(target.ravel(), pred.ravel())):
            buf.write(f"{t},{float(y)!r},{float(p)!r},{int(t >= model.washout)}\n")
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_OK


# -- gen ---------------------------------------------------------------------------------

_TASK_RE = re.compile(r"^([a-z_]+)(?:\((\d+)\))?$")


def cmd_gen(args) -> int:
    m = _TASK_RE.match(args.task.strip())
    if not m:
        raise UsageError(f"cannot parse task spec {args.task!r}; try xor, parity(3), sine(100) or series(1000)")
    kind, arg = m.group(1), m.group(2)
    size = None if arg is None else int(arg)
    try:
        if kind == "series":
            x = noisy_sine_series(size or 1000, args.period, args.noise, seed=args.seed)
            if args.lag:
                text = window_series(x, args.lag).to_csv()
            else:
                text = "value\n" + "".join(f"{float(v)!r}\n" for v in x)
        else:
            if kind in ("xor",) and arg is not None:
                raise UsageError("xor takes no size")
            ds = gen_task(kind, seed=args.seed, n=size if kind == "parity" else None,
                          samples=size if kind == "sine" else None)
            text = ds.to_csv()
    except GNetError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- oracle ------------------------------------------------------------------------------

def _oracle_doc(args) -> dict:
    if not args.config:
        return {}
    try:
        doc = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read config {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"{args.config}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"{args.config}: oracle config must be a JSON object")
    return doc


def _oracle_network(doc, seed):
    try:
        _check_network(doc["network"])
        spec = build_network(doc["network"], TrainerConfig(rng_seed=seed))
    except ConfigError as exc:
        raise UsageError(f"field {exc}") from None
    pattern = np.asarray(doc.get("pattern", [0.3] * spec.n_inputs), dtype=float)
    return spec, pattern


def _gradcheck(doc, seed):
    from .deriv import extended_gradient
    from .oracle import finite_diff_gradient, random_instance

    rel_tol = float(doc.get("rel_tol", 1e-5))
    abs_tol = float(doc.get("abs_tol", 1e-8))
    instances = int(doc.get("instances", 1))
    worst = 0.0
    params = ("weights", "lambda_plus", "lambda_minus", "r")
    for s in range(seed, seed + instances):
        spec, a, b = random_instance(s, n=doc.get("n"), recurrent=doc.get("recurrent"), extended=True)
        g = extended_gradient(spec, a, b)
        fd = finite_diff_gradient(spec, a, b, params=params)
        for p in params:
            # deviation relative to max(|fd|, abs_tol / rel_tol): <= rel_tol iff within both bounds
            dev = np.abs(g[p] - fd[p]) / np.maximum(np.abs(fd[p]), abs_tol / rel_tol)
            worst = max(worst, float(dev.max(initial=0.0)))
    return {"instances": instances, "max_rel_dev": worst, "tolerance": rel_tol, "pass": worst <= rel_tol}


def _ctmc(doc, seed, product):
    from .oracle import CtmcSpec, gnetwork_ctmc_steady, product_form_distance

    tol = float(doc.get("tolerance", 1e-6))
    cap = int(doc.get("cap", 40))
    if "network" not in doc:
        if product:
            raise UsageError("productform needs a 'network' block")
        load = float(doc.get("load", 0.5))
        ctmc = CtmcSpec(np.array([load]), np.zeros(1), np.ones(1), np.zeros((1, 1)), np.zeros((1, 1)),
                        np.ones(1), int(doc.get("cap", 60)))
        res = gnetwork_ctmc_steady(ctmc)
        k = np.arange(res.cap + 1)
        dev = float(np.abs(res.joint - load ** k * (1 - load)).max())
        tol = float(doc.get("tolerance", 1e-8))
        return {"model": "mm1", "load": load, "cap": res.cap, "max_abs_dev": dev, "tolerance": tol,
                "pass": dev <= tol}
    spec, pattern = _oracle_network(doc, seed)
    res = gnetwork_ctmc_steady(CtmcSpec.from_network(spec, pattern, cap))
    rho = solve(spec, pattern).rho
    out = {"model": "network", "n": spec.n, "cap": res.cap, "boundary_mass": res.boundary_mass,
           "ctmc_busy": res.marginals.tolist(), "fixed_point": rho.tolist()}
    if product:
        dist = product_form_distance(res, rho)
        out.update({"tv_distance": dist, "tolerance": tol, "pass": dist <= tol})
    else:
        dev = float(np.abs(res.marginals - rho).max())
        out.update({"max_abs_dev": dev, "tolerance": tol, "pass": dev <= tol})
    return out


def cmd_oracle(args) -> int:
    doc = _oracle_doc(args)
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    try:
        if args.kind == "gradcheck":
            verdict = _gradcheck(doc, seed)
        else:
            verdict = _ctmc(doc, seed, product=args.kind == "productform")
    except GuardError as exc:
        raise UsageError(str(exc)) from None
    verdict = {"oracle": args.kind, **verdict}
    text = json.dumps(verdict, indent=2) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    sys.stdout.write(text)
    print(f"{args.kind}: {'PASS' if verdict['pass'] else 'FAIL'}", file=sys.stderr)
    return EXIT_OK if verdict["pass"] else EXIT_FAIL


# -- entry point ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gnet", description="Random neural network training and verification.")
    p.add_argument("--version", action="version", version=f"gnet {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a network or fit an ESQN from a JSON run config")
    t.add_argument("config")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--out", help="output directory (default: outputs.dir of the config)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="metrics of a saved model on a CSV dataset")
    e.add_argument("model")
    e.add_argument("data")
    e.add_argument("--out", help="also write the metrics JSON here")
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="predictions of a saved model as CSV")
    pr.add_argument("model")
    pr.add_argument("data")
    pr.add_argument("--out", help="CSV path (default: stdout)")
    pr.set_defaults(func=cmd_predict)

    g = sub.add_parser("gen", help="write a benchmark dataset as CSV")
    g.add_argument("task", help="xor, parity(N), sine(K) or series(LENGTH)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lag", type=int, help="window a series into lagged rows")
    g.add_argument("--period", type=float, default=25.0)
    g.add_argument("--noise", type=float, default=0.1)
    g.add_argument("--out", help="CSV path (default: stdout)")
    g.set_defaults(func=cmd_gen)

    o = sub.add_parser("oracle", help="check the model against an independent ground truth")
    o.add_argument("kind", choices=("gradcheck", "ctmc", "productform"))
    o.add_argument("--config", help="JSON oracle config")
    o.add_argument("--seed", type=int)
    o.add_argument("--out", help="also write the verdict JSON here")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"gnet: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except GNetError as exc:
        print(f"gnet: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except Exception as exc:  # internal failure; keep the exit-code contract
        log.debug("traceback", exc_info=True)
        print(f"gnet: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
