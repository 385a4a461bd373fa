"""Point-wise precision/recall/F1, Best-F1 sweeps and dataset aggregation."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import IntervalOutOfBounds, LengthMismatch, MissingTruth

CSV_COLUMNS = ("Precision", "Recall", "F1", "Best-F1", "Average")


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    best_f1: Optional[float] = None
    best_threshold: Optional[float] = None

    @property
    def counts(self) -> tuple[int, int, int]:
        return (self.tp, self.fp, self.fn)

    @property
    def average(self) -> float:
        vals = [self.precision, self.recall, self.f1]
        vals.append(self.best_f1 if self.best_f1 is not None else self.f1)
        return float(np.mean(vals))

    def to_dict(self) -> dict:
        bt = self.best_threshold
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "best_f1": self.best_f1,
            "best_threshold": "inf" if bt is not None and math.isinf(bt) else bt,
            "counts": {"tp": self.tp, "fp": self.fp, "fn": self.fn},
            "average": self.average,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def csv_row(self) -> list[str]:
        best = self.best_f1 if self.best_f1 is not None else self.f1
        return [f"{x:.4f}" for x in (self.precision, self.recall, self.f1, best, self.average)]


def to_csv(reports: dict[str, MetricsReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("name",) + CSV_COLUMNS)
    for name, rep in reports.items():
        w.writerow([name] + rep.csv_row())
    return buf.getvalue()


def _labels(x, name="labels") -> np.ndarray:
    if x is None:
        raise MissingTruth(f"{name} missing")
    return np.asarray(x).astype(bool).ravel()


def verdicts_to_labels(verdicts: Iterable, length: int, min_confidence: int = 1) -> np.ndarray:
    """0/1 labels set on the union of closed verdict intervals with confidence >= ``min_confidence``."""
    if min_confidence not in (1, 2, 3):
        raise ValueError("min_confidence must be in 1..3")
    out = np.zeros(length, dtype=np.int8)
    for v in verdicts:
        if v.start < 0 or v.end >= length or v.start > v.end:
            raise IntervalOutOfBounds(f"[{v.start}, {v.end}] outside [0, {length})")
        if v.confidence >= min_confidence:
            out[v.start : v.end + 1] = 1
    return out


def from_counts(tp: int, fp: int, fn: int, **extra) -> MetricsReport:
    if tp == 0 and fp == 0 and fn == 0:
        return MetricsReport(1.0, 1.0, 1.0, 0, 0, 0, **extra)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return MetricsReport(p, r, f, int(tp), int(fp), int(fn), **extra)


def point_metrics(pred, truth) -> MetricsReport:
    pred, truth = _labels(pred, "predictions"), _labels(truth, "truth")
    if pred.shape != truth.shape:
        raise LengthMismatch(f"{pred.size} predictions vs {truth.size} truth labels")
    tp = int(np.count_nonzero(pred & truth))
    fp = int(np.count_nonzero(pred & ~truth))
    fn = int(np.count_nonzero(~pred & truth))
    return from_counts(tp, fp, fn)


def _sweep(candidates: Sequence[float], labeller, truth) -> tuple[float, float]:
    best, best_t = -1.0, None
    for t in sorted(candidates):
        f = point_metrics(labeller(t), truth).f1
        if f > best:
            best, best_t = f, t
    return best, float(best_t)


def best_f1(mode: str, source, truth, length: Optional[int] = None) -> tuple[float, float]:
    """Max F1 over a threshold sweep, with the smallest threshold reaching it.

    ``mode="confidence"``: ``source`` is a list of verdicts, thresholds 1, 2, 3.
    ``mode="score"``: ``source`` is a score array (or ScoreSeries); a point is flagged when
    its score is >= the threshold, and every distinct score plus +inf is tried.
    """
    truth = _labels(truth, "truth")
    if mode == "confidence":
        n = length if length is not None else truth.size
        return _sweep((1, 2, 3), lambda t: verdicts_to_labels(source, n, int(t)), truth)
    if mode == "score":
        scores = np.asarray(getattr(source, "scores", source), dtype=float)
        if scores.shape != truth.shape:
            raise LengthMismatch(f"{scores.size} scores vs {truth.size} truth labels")
        cands = list(np.unique(scores)) + [math.inf]
        return _sweep(cands, lambda t: scores >= t, truth)
    raise ValueError(f"unknown mode {mode!r}")


def with_best(report: MetricsReport, best: tuple[float, float]) -> MetricsReport:
    return MetricsReport(report.precision, report.recall, report.f1, report.tp, report.fp, report.fn, best[0], best[1])


def dataset_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Pool confusion counts across series; Best-F1 is the mean of the per-series values."""
    if not reports:
        raise ValueError("need at least one report")
    tp = sum(r.tp for r in reports)
    fp = sum(r.fp for r in reports)
    fn = sum(r.fn for r in reports)
    bests = [r.best_f1 for r in reports if r.best_f1 is not None]
    if len(reports) == 1:
        r = reports[0]
        return from_counts(tp, fp, fn, best_f1=r.best_f1, best_threshold=r.best_threshold)
    return from_counts(tp, fp, fn, best_f1=float(np.mean(bests)) if bests else None)
