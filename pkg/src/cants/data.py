"""Time-series ingestion, scaling, splitting and synthetic benchmark series."""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, EmptyFileError, MissingColumnError, NonNumericError


@dataclass
class TimeSeries:
    columns: list[str]
    values: np.ndarray  # (rows, columns)
    input_idx: list[int]
    target_idx: int
    dropped_rows: int = 0

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def input_names(self) -> list[str]:
        return [self.columns[i] for i in self.input_idx]

    @property
    def target_name(self) -> str:
        return self.columns[self.target_idx]

    @property
    def inputs(self) -> np.ndarray:
        return self.values[:, self.input_idx]

    @property
    def target(self) -> np.ndarray:
        return self.values[:, self.target_idx]


@dataclass
class MinMaxRecord:
    columns: list[str]
    mins: np.ndarray
    maxs: np.ndarray

    def denormalize(self, values, column: str):
        i = self.columns.index(column)
        return np.asarray(values) * (self.maxs[i] - self.mins[i]) + self.mins[i]


@dataclass
class SplitSpec:
    train_len: int
    test_len: int
    horizon: int = 1

    def validate(self, n_rows: int) -> None:
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if self.train_len < 1 or self.test_len < 1:
            raise ConfigError("train_len and test_len must be positive")
        if self.train_len + self.test_len > n_rows:
            raise ConfigError(
                f"split {self.train_len}+{self.test_len} exceeds series length {n_rows}"
            )


@dataclass
class Dataset:
    """Input/target windows for training and validation.

    Each segment is a list of per-step input tuples and a list of target
    tuples; predictions for the first ``warmup`` steps are not scored.
    The validation segment is prefixed with trailing training *inputs* so
    its state is warm when scoring starts; no training target is reused.
    """

    train_x: list[tuple[float, ...]]
    train_y: list[tuple[float, ...]]
    valid_x: list[tuple[float, ...]]
    valid_y: list[tuple[float, ...]]
    warmup: int
    # absolute row index of each target, kept for leak checks and prediction export
    train_rows: list[int] = field(default_factory=list)
    valid_rows: list[int] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return len(self.train_x[0]) if self.train_x else len(self.valid_x[0])


def load_csv(path, input_cols, target_col) -> TimeSeries:
    """Read a headed numeric CSV; rows with blank cells are dropped and counted."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r]
    if not rows:
        raise EmptyFileError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    for col in list(input_cols) + [target_col]:
        if col not in header:
            raise MissingColumnError(col, header)
    wanted = list(dict.fromkeys(list(input_cols) + [target_col]))
    idx = [header.index(c) for c in wanted]
    data, dropped = [], 0
    for lineno, row in enumerate(rows[1:], start=2):
        cells = [row[i].strip() if i < len(row) else "" for i in idx]
        if any(c == "" for c in cells):
            dropped += 1
            continue
        vals = []
        for col, cell in zip(wanted, cells):
            try:
                vals.append(float(cell))
            except ValueError:
                raise NonNumericError(lineno, col, cell) from None
        data.append(vals)
    if not data:
        raise EmptyFileError(f"{path} has no complete data rows")
    return TimeSeries(
        wanted,
        np.array(data, dtype=float),
        [wanted.index(c) for c in input_cols],
        wanted.index(target_col),
        dropped,
    )


def normalize(series: TimeSeries) -> tuple[TimeSeries, MinMaxRecord]:
    """Min-max scale every column into [0, 1].

    A constant target is an error; constant inputs are dropped with a warning.
    """
    vals = series.values
    mins, maxs = vals.min(axis=0), vals.max(axis=0)
    keep = []
    for i, name in enumerate(series.columns):
        if maxs[i] > mins[i]:
            keep.append(i)
        elif i == series.target_idx:
            raise DataError(f"target column {name!r} is constant")
        else:
            warnings.warn(f"dropping constant input column {name!r}", stacklevel=2)
    cols = [series.columns[i] for i in keep]
    scaled = (vals[:, keep] - mins[keep]) / (maxs[keep] - mins[keep])
    inputs = [keep.index(i) for i in series.input_idx if i in keep]
    out = TimeSeries(cols, scaled, inputs, keep.index(series.target_idx), series.dropped_rows)
    return out, MinMaxRecord(cols, mins[keep].copy(), maxs[keep].copy())


SYNTH_COLUMNS = ["sin_a", "sin_b", "target_lag2", "target"]


def synth_series(kind: str = "sine_mix", length: int = 500, noise_sd: float = 0.0, seed: int = 0) -> TimeSeries:
    """Deterministic 3-input / 1-target series.

    Inputs are two phase-shifted sinusoids and the target delayed by two
    steps. ``sine_mix`` targets repeat every 20 steps; ``ramp`` is a
    25-step sawtooth.
    """
    if length < 50:
        raise ConfigError(f"synthetic series needs length >= 50, got {length}")
    rng = np.random.default_rng(seed)
    t = np.arange(-2, length, dtype=float)
    if kind == "sine_mix":
        clean = 0.6 * np.sin(2 * np.pi * t / 20) + 0.3 * np.sin(2 * np.pi * t / 10 + 0.7)
    elif kind == "ramp":
        clean = np.mod(t, 25) / 25.0
    else:
        raise ConfigError(f"unknown synthetic series kind {kind!r}")
    target = clean + (rng.normal(0.0, noise_sd, size=t.size) if noise_sd > 0 else 0.0)
    tt = t[2:]
    sin_a = np.sin(2 * np.pi * tt / 20 + np.pi / 4)
    sin_b = np.sin(2 * np.pi * tt / 10 + np.pi / 3)
    values = np.column_stack([sin_a, sin_b, target[:-2], target[2:]])
    return TimeSeries(list(SYNTH_COLUMNS), values, [0, 1, 2], 3)


def make_dataset(series: TimeSeries, split: SplitSpec, warmup: int) -> Dataset:
    """Window a (normalized) series for one-step-ahead forecasting.

    Training predicts rows ``[horizon + warmup, train_len)``; validation
    predicts rows ``[train_len, train_len + test_len)``.
    """
    split.validate(len(series))
    h, n_tr, n_te = split.horizon, split.train_len, split.test_len
    if n_tr - h <= warmup:
        raise ConfigError(f"train_len {n_tr} too short for warm-up {warmup} and horizon {h}")
    x = series.inputs
    y = series.target
    to_rows = lambda a: [tuple(map(float, r)) for r in a]  # noqa: E731

    tr_in = range(0, n_tr - h)
    start = max(n_tr - h - warmup, 0)
    va_in = range(start, n_tr + n_te - h)
    return Dataset(
        train_x=to_rows(x[tr_in.start:tr_in.stop]),
        train_y=[(float(y[t + h]),) for t in tr_in],
        valid_x=to_rows(x[va_in.start:va_in.stop]),
        valid_y=[(float(y[t + h]),) for t in va_in],
        warmup=warmup,
        train_rows=[t + h for t in tr_in][warmup:],
        valid_rows=[t + h for t in va_in][n_tr - h - start:],
    )
