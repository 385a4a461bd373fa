"""Time-series data model, CSV ingestion and preprocessing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    ConstantSeries,
    EmptySeries,
    FileMissing,
    LabelLengthMismatch,
    ParseError,
    SeriesTooShort,
)

MIN_TAIL = 20


def _frozen(a, dtype) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Univariate series on the index grid 0..T-1, with optional 0/1 labels."""

    name: str
    values: np.ndarray
    labels: Optional[np.ndarray] = None

    def __post_init__(self):
        values = _frozen(self.values, float)
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all(np.isfinite(values)):
            raise ValueError("values contain NaN or infinity")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = _frozen(self.labels, np.int8)
            if labels.shape != values.shape:
                raise LabelLengthMismatch(f"{len(labels)} labels for {len(values)} values")
            if np.any((labels != 0) & (labels != 1)):
                raise ValueError("labels must be 0 or 1")
            object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def indices(self) -> np.ndarray:
        return np.arange(len(self.values))

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.name, values, self.labels)


@dataclass(frozen=True)
class NormalizationParams:
    a: float
    b: float


@dataclass(frozen=True, eq=False)
class Window:
    """A contiguous slice ``[start, end)`` of a parent series."""

    parent: str
    start: int
    end: int
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = _frozen(self.values, float)
        object.__setattr__(self, "values", values)
        if not (0 <= self.start < self.end):
            raise ValueError(f"bad window bounds [{self.start}, {self.end})")
        if len(values) != self.end - self.start:
            raise ValueError("window values do not match its bounds")

    def __len__(self) -> int:
        return self.end - self.start

    @classmethod
    def of(cls, values: Sequence[float], start: int = 0, parent: str = "series") -> "Window":
        values = np.asarray(values, dtype=float)
        return cls(parent, start, start + len(values), values)


# -- ingestion ---------------------------------------------------------------


def _parse_float(token: str, row: int) -> float:
    try:
        value = float(token)
    except ValueError:
        raise ParseError(row, f"not a number: {token!r}") from None
    if not math.isfinite(value):
        raise ParseError(row, f"non-finite value {token!r}")
    return value


def load_series(path, has_labels: bool = False, name: Optional[str] = None) -> TimeSeries:
    """Read an ``index,value[,label]`` CSV and reindex it to 0..T-1.

    Rows are ordered by their original index before reindexing; duplicate
    indices are rejected.
    """
    path = Path(path)
    if not path.is_file():
        raise FileMissing(str(path))
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(1, "empty file")
    header = [h.strip().lower() for h in rows[0]]
    if header not in (["index", "value"], ["index", "value", "label"]):
        raise ParseError(1, f"unexpected header {rows[0]!r}")
    if has_labels and len(header) == 2:
        raise LabelLengthMismatch("labels requested but the file has no label column")

    records = []
    labels = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 2 or len(row) > len(header):
            raise ParseError(lineno, f"expected {len(header)} fields, got {len(row)}")
        try:
            idx = int(row[0])
        except ValueError:
            raise ParseError(lineno, f"bad index {row[0]!r}") from None
        value = _parse_float(row[1].strip(), lineno)
        records.append((idx, value))
        if len(row) == 3 and row[2].strip() != "":
            tok = row[2].strip()
            if tok not in ("0", "1"):
                raise ParseError(lineno, f"label must be 0 or 1, got {tok!r}")
            labels.append((idx, int(tok)))
    if not records:
        raise EmptySeries(str(path))

    order = sorted(range(len(records)), key=lambda i: records[i][0])
    idxs = [records[i][0] for i in order]
    if len(set(idxs)) != len(idxs):
        raise ParseError(1, "duplicate index values")
    values = [records[i][1] for i in order]

    label_arr = None
    if has_labels:
        if len(labels) != len(records):
            raise LabelLengthMismatch(f"{len(labels)} labels for {len(records)} values")
        by_idx = dict(labels)
        label_arr = [by_idx[i] for i in idxs]
    return TimeSeries(name or path.stem, values, label_arr)


def save_series(series: TimeSeries, path) -> None:
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if series.labels is None:
            w.writerow(["index", "value"])
            for i, v in enumerate(series.values):
                w.writerow([i, repr(float(v))])
        else:
            w.writerow(["index", "value", "label"])
            for i, (v, lab) in enumerate(zip(series.values, series.labels)):
                w.writerow([i, repr(float(v)), int(lab)])


# -- preprocessing -------------------------------------------------------------


def normalize(series: TimeSeries) -> tuple[TimeSeries, NormalizationParams]:
    """Min-max scale to [0, 1]."""
    if len(series) < 2:
        raise SeriesTooShort("normalization needs at least 2 points")
    a = float(series.values.min())
    b = float(series.values.max())
    if b == a:
        raise ConstantSeries(f"{series.name} is constant ({a})")
    out = (series.values - a) / (b - a)
    # pin the extremes; (b - a) / (b - a) can round below 1
    out[series.values == a] = 0.0
    out[series.values == b] = 1.0
    return series.with_values(out), NormalizationParams(a, b)


def denormalize(values, params: NormalizationParams) -> np.ndarray:
    return np.asarray(values, dtype=float) * (params.b - params.a) + params.a


def linear_fit(values) -> tuple[float, float]:
    """Closed-form least-squares line through ``(i, values[i])``; returns (slope, intercept)."""
    y = np.asarray(values, dtype=float)
    n = len(y)
    x = np.arange(n, dtype=float)
    xm = x.mean()
    ym = y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0.0:
        return 0.0, float(ym)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    return slope, float(ym - slope * xm)


def detrend(series: TimeSeries) -> TimeSeries:
    if len(series) < 2:
        raise SeriesTooShort("detrending needs at least 2 points")
    slope, intercept = linear_fit(series.values)
    fitted = slope * np.arange(len(series)) + intercept
    return series.with_values(series.values - fitted)


def segment_windows(
    series: TimeSeries, length: int = 100, step: int = 100, min_tail: int = MIN_TAIL
) -> list[Window]:
    """Cut fixed-length windows starting at 0, step, 2*step, ...

    A final partial window is kept only when it has at least ``min_tail`` points.
    """
    if length < 1 or step < 1:
        raise ValueError("length and step must be >= 1")
    n = len(series)
    if n == 0:
        raise EmptySeries(series.name)
    windows = []
    for start in range(0, n, step):
        end = start + length
        if end <= n:
            windows.append(Window(series.name, start, end, series.values[start:end]))
            continue
        if n - start >= min_tail:
            windows.append(Window(series.name, start, n, series.values[start:n]))
        break
    return windows


def preprocess(series: TimeSeries, detrend_first: bool = True) -> TimeSeries:
    """Detrend (optional) then min-max normalize.

    Series that are constant, or exactly affine when detrending, map to all
    zeros instead of having rounding residue stretched onto [0, 1].
    """
    spread = float(np.ptp(series.values)) if len(series) else 0.0
    if len(series) >= 2 and detrend_first:
        series = detrend(series)
    if float(np.ptp(series.values)) <= 1e-12 * max(1.0, spread):
        return series.with_values(np.zeros(len(series)))
    try:
        out, _ = normalize(series)
    except (ConstantSeries, SeriesTooShort):
        out = series.with_values(np.zeros(len(series)))
    return out
