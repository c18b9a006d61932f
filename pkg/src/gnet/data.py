"""Datasets, normalization, benchmark tasks, metrics and series windowing."""

from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import InvalidInputError, ParseError, ScalerError, ShapeError


@dataclass(frozen=True, eq=False)
class MinMaxScaler:
    """Per-column affine map of [lo, hi] onto [0, 1]."""

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, values, names=None) -> "MinMaxScaler":
        values = np.atleast_2d(np.asarray(values, dtype=float))
        lo = values.min(axis=0)
        hi = values.max(axis=0)
        flat = np.flatnonzero(~(hi > lo))
        if flat.size:
            label = [names[i] for i in flat] if names is not None else flat.tolist()
            raise ScalerError(f"cannot min-max scale constant column(s) {label}")
        return cls(lo, hi)

    def transform(self, values) -> np.ndarray:
        return (np.asarray(values, dtype=float) - self.lo) / (self.hi - self.lo)

    def inverse(self, values) -> np.ndarray:
        return np.asarray(values, dtype=float) * (self.hi - self.lo) + self.lo

    def to_dict(self) -> dict:
        return {"lo": np.asarray(self.lo).tolist(), "hi": np.asarray(self.hi).tolist()}

    @classmethod
    def from_dict(cls, doc) -> "MinMaxScaler":
        return cls(np.asarray(doc["lo"], dtype=float), np.asarray(doc["hi"], dtype=float))


@dataclass(frozen=True, eq=False)
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    input_scaler: Optional[MinMaxScaler] = None
    target_scaler: Optional[MinMaxScaler] = None
    input_names: tuple = ()
    target_names: tuple = ()
    provenance: str = ""

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        b = np.atleast_2d(np.asarray(self.targets, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ShapeError(f"{a.shape[0]} input rows but {b.shape[0]} target rows")
        if a.shape[0] < 1:
            raise InvalidInputError("a dataset needs at least one sample")
        for name, m in (("inputs", a), ("targets", b)):
            if not np.all(np.isfinite(m)) or m.min() < -1e-12 or m.max() > 1 + 1e-12:
                raise InvalidInputError(f"{name} must lie in [0, 1]; normalize the data first")
        object.__setattr__(self, "inputs", np.clip(a, 0.0, 1.0))
        object.__setattr__(self, "targets", np.clip(b, 0.0, 1.0))
        if not self.input_names:
            object.__setattr__(self, "input_names", tuple(f"x{i + 1}" for i in range(a.shape[1])))
        if not self.target_names:
            object.__setattr__(self, "target_names", tuple(f"y{i + 1}" for i in range(b.shape[1])))

    @property
    def k(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_outputs(self) -> int:
        return self.targets.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.inputs[rows], self.targets[rows], self.input_scaler, self.target_scaler,
                       self.input_names, self.target_names, self.provenance)

    def normalization(self) -> dict:
        return {
            "input_columns": list(self.input_names),
            "target_columns": list(self.target_names),
            "inputs": self.input_scaler.to_dict() if self.input_scaler else None,
            "targets": self.target_scaler.to_dict() if self.target_scaler else None,
        }

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(list(self.input_names) + list(self.target_names))
        for a, b in zip(self.inputs, self.targets):
            w.writerow([repr(float(x)) for x in itertools.chain(a, b)])
        text = buf.getvalue()
        if path is not None:
            from .io import atomic_write_text
            atomic_write_text(path, text)
        return text


def read_table(path) -> tuple:
    """Header plus a float matrix from a CSV file, with row/column-precise errors."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{path} is empty")
    header = [c.strip() for c in rows[0]]
    if len(rows) < 2:
        raise ParseError(f"{path} has a header but no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{path}: row {i} has {len(row)} cells, header has {len(header)}")
        for j, cell in enumerate(row):
            try:
                data[i - 2, j] = float(cell)
            except ValueError:
                raise ParseError(f"{path}: row {i}, column {header[j]!r}: {cell!r} is not a number") from None
    return header, data


def load_csv(path, input_columns=None, target_columns=None, normalize=False, n_targets=1) -> Dataset:
    """Read a dataset; without explicit columns the last ``n_targets`` columns are targets."""
    header, data = read_table(path)
    if target_columns is None:
        target_columns = header[-n_targets:] if input_columns is None else \
            [h for h in header if h not in input_columns]
    if input_columns is None:
        input_columns = [h for h in header if h not in target_columns]
    missing = [c for c in list(input_columns) + list(target_columns) if c not in header]
    if missing:
        raise ParseError(f"{path}: missing column(s) {missing}; header is {header}")
    a = data[:, [header.index(c) for c in input_columns]]
    b = data[:, [header.index(c) for c in target_columns]]
    sa = sb = None
    if normalize:
        sa = MinMaxScaler.fit(a, list(input_columns))
        sb = MinMaxScaler.fit(b, list(target_columns))
        a, b = sa.transform(a), sb.transform(b)
    return Dataset(a, b, sa, sb, tuple(input_columns), tuple(target_columns), f"csv:{Path(path).name}")


def load_series(path, column=None) -> np.ndarray:
    header, data = read_table(path)
    j = 0 if column is None else header.index(column) if column in header else None
    if j is None:
        raise ParseError(f"{path}: missing column {column!r}")
    return data[:, j]


def gen_task(kind, seed=None, n=None, samples=None) -> Dataset:
    """Benchmark datasets: "xor", "parity" (n bits) and "sine" (samples points)."""
    if kind == "xor":
        a = np.array([[0, 0], [0, 1], [1, 0], [1, 1]], dtype=float)
        return Dataset(a, (a.sum(axis=1) % 2)[:, None], provenance="task:xor")
    if kind == "parity":
        n = 3 if n is None else int(n)
        if not 1 <= n <= 10:
            raise InvalidInputError(f"parity needs 1 <= n <= 10 bits, got {n}")
        a = np.array(list(itertools.product([0, 1], repeat=n)), dtype=float)
        return Dataset(a, (a.sum(axis=1) % 2)[:, None], provenance=f"task:parity({n})")
    if kind == "sine":
        samples = 100 if samples is None else int(samples)
        if samples < 2:
            raise InvalidInputError(f"sine needs at least 2 samples, got {samples}")
        t = np.random.default_rng(seed).uniform(0.0, 1.0, samples)
        return Dataset(t[:, None], sine_target(t)[:, None], provenance=f"task:sine({samples})")
    raise InvalidInputError(f"unknown task {kind!r}")


def sine_target(t) -> np.ndarray:
    """sin(2 pi t) shifted and scaled into [0, 1]."""
    return (np.sin(2 * np.pi * np.asarray(t, dtype=float)) + 1.0) / 2.0


def noisy_sine_series(length, period=25.0, noise=0.1, seed=None) -> np.ndarray:
    """sin(2 pi t / period) plus Gaussian observation noise."""
    rng = np.random.default_rng(seed)
    t = np.arange(int(length))
    phase = rng.uniform(0, 2 * np.pi)
    return np.sin(2 * np.pi * t / period + phase) + noise * rng.standard_normal(t.size)


def nmse(predictions, targets) -> float:
    """Squared error normalized by the target variance."""
    p = np.asarray(predictions, dtype=float)
    b = np.asarray(targets, dtype=float)
    if p.shape != b.shape:
        raise ShapeError(f"predictions {p.shape} vs targets {b.shape}")
    denom = float(np.sum((b - b.mean(axis=0)) ** 2))
    return float(np.sum((b - p) ** 2)) / denom if denom > 0 else float("nan")


def metrics(predictions, targets) -> dict:
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    b = np.atleast_2d(np.asarray(targets, dtype=float))
    if p.shape != b.shape:
        raise ShapeError(f"predictions {p.shape} vs targets {b.shape}")
    rss = float(np.sum((b - p) ** 2))
    out = {"rss": rss, "mse": rss / b.shape[0], "nmse": nmse(p, b)}
    if b.shape[1] == 1 and np.all(np.isin(b, (0.0, 1.0))):
        out["accuracy"] = float(np.mean((p >= 0.5) == (b >= 0.5)))
    return out


def lag_matrix(x, lag, horizon=1) -> tuple:
    """Inputs x[t-lag+1 .. t] (oldest first) and targets x[t+horizon] for every valid t."""
    x = np.asarray(x, dtype=float).reshape(-1)
    rows = x.size - lag - horizon + 1
    if rows < 1:
        raise InvalidInputError(f"series of length {x.size} is too short for lag {lag} and horizon {horizon}")
    idx = np.arange(rows)[:, None] + np.arange(lag)[None, :]
    return x[idx], x[np.arange(rows) + lag - 1 + horizon][:, None]


def window_series(series, lag, horizon=1, normalize=True) -> Dataset:
    """Row t holds x[t-lag+1 .. t] as inputs and x[t+horizon] as target."""
    x = np.asarray(series, dtype=float).reshape(-1)
    lag, horizon = int(lag), int(horizon)
    if lag < 1 or horizon < 1:
        raise InvalidInputError("lag and horizon must be at least 1")
    if x.size <= lag + horizon - 1 or x.size < lag + horizon:
        raise InvalidInputError(f"series of length {x.size} is too short for lag {lag} and horizon {horizon}")
    scaler = None
    if normalize:
        s = MinMaxScaler.fit(x[:, None], ["series"])
        x = s.transform(x[:, None]).ravel()
        scaler = s
    a, b = lag_matrix(x, lag, horizon)
    in_s = out_s = None
    if scaler is not None:
        in_s = MinMaxScaler(np.repeat(scaler.lo, lag), np.repeat(scaler.hi, lag))
        out_s = scaler
    names = tuple(f"lag{lag - i - 1}" for i in range(lag))
    return Dataset(a, b, in_s, out_s, names, ("target",), f"window(lag={lag},h={horizon})")


def split(dataset: Dataset, train_fraction=0.8, shuffle=False, seed=None):
    """Train/test split; contiguous (time order preserved) unless shuffled."""
    if not 0 < train_fraction < 1:
        raise InvalidInputError("train_fraction must lie in (0, 1)")
    idx = np.arange(dataset.k)
    if shuffle:
        idx = np.random.default_rng(seed).permutation(idx)
    cut = int(round(train_fraction * dataset.k))
    if cut < 1 or cut >= dataset.k:
        raise InvalidInputError("split leaves an empty side")
    return dataset.subset(idx[:cut]), dataset.subset(idx[cut:])
