"""Offline episode scoring from a finished trace.

Three components, each with a weight and an on/off switch:

* ``two_sided``: mean of point precision and recall of the verdict union.
* ``fp_penalty``: share of window points predicted anomalous but not labeled so.
* ``rule_matching``: share of verdicts that pass all structural checks, including
  overlap with evidence some tool actually produced during the episode.

``total = w_ts*two_sided + w_rm*rule_matching - w_fp*fp_penalty`` over enabled components.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import MissingTruth, WindowTruthMismatch
from .knowledge import KnowledgeStore
from .metrics import point_metrics

# context_deviation at or above this counts as a flagged structure
FLAG_DEVIATION = 3.0


@dataclass(frozen=True)
class RewardConfig:
    w_ts: float = 1.0
    w_rm: float = 0.5
    w_fp: float = 1.0
    use_ts: bool = True
    use_rm: bool = True
    use_fp: bool = True

    def __post_init__(self):
        if min(self.w_ts, self.w_rm, self.w_fp) < 0:
            raise ValueError("reward weights must be >= 0")


@dataclass(frozen=True)
class RewardBreakdown:
    two_sided: float
    fp_penalty: float
    rule_matching: float
    total: float
    config: RewardConfig = RewardConfig()

    def contributions(self) -> dict[str, float]:
        c = self.config
        return {
            "two_sided": c.w_ts * self.two_sided if c.use_ts else 0.0,
            "rule_matching": c.w_rm * self.rule_matching if c.use_rm else 0.0,
            "fp_penalty": 0.0 - c.w_fp * self.fp_penalty if c.use_fp else 0.0,
        }

    def to_dict(self) -> dict:
        return {
            "two_sided": self.two_sided,
            "fp_penalty": self.fp_penalty,
            "rule_matching": self.rule_matching,
            "total": self.total,
            "contributions": self.contributions(),
            "config": dict(self.config.__dict__),
        }


def _window_labels(verdicts, start: int, length: int) -> np.ndarray:
    out = np.zeros(length, dtype=bool)
    for v in verdicts:
        lo, hi = max(v.start - start, 0), min(v.end - start, length - 1)
        if lo <= hi:
            out[lo : hi + 1] = True
    return out


def _truth(truth) -> np.ndarray:
    if truth is None:
        raise MissingTruth("reward scoring needs ground-truth labels")
    return np.asarray(truth).astype(bool).ravel()


def two_sided_reward(verdicts, truth, start: int = 0) -> float:
    truth = _truth(truth)
    m = point_metrics(_window_labels(verdicts, start, truth.size), truth)
    return 0.5 * (m.precision + m.recall)


def false_positive_penalty(verdicts, truth, length: Optional[int] = None, start: int = 0) -> float:
    truth = _truth(truth)
    n = length if length is not None else truth.size
    if n < 1:
        raise ValueError("length must be >= 1")
    pred = _window_labels(verdicts, start, truth.size)
    return float(np.count_nonzero(pred & ~truth)) / n


def evidence_points(trace) -> set[int]:
    """Absolute indices that some tool in the trace singled out."""
    pts: set[int] = set()
    for res in trace.tool_results():
        p = res.payload
        if res.tool == "diff_zscore":
            for i in p.outlier_indices:
                pts.update((i, i + 1))
        elif res.tool == "local_structure":
            dev = p.context_deviation
            if dev is not None and (math.isinf(dev) or dev >= FLAG_DEVIATION):
                pts.update(range(p.start, p.end + 1))
        elif res.tool == "global_structure" and p.level_shift_index is not None:
            pts.add(p.level_shift_index)
    return pts


def verdict_checks(v, taxonomy: Sequence[str], window: tuple[int, int], evidence: set[int]) -> dict[str, bool]:
    start, end = window
    return {
        "type": v.type in taxonomy,
        "explanation": bool(str(v.explanation).strip()),
        "interval": start <= v.start <= v.end < end,
        "confidence": v.confidence in (1, 2, 3),
        "evidence": any(v.start <= i <= v.end for i in evidence),
    }


def rule_matching_reward(verdicts, taxonomy, trace) -> float:
    if not verdicts:
        return 1.0
    if isinstance(taxonomy, KnowledgeStore):
        taxonomy = taxonomy.taxonomy()
    w = trace.window
    evidence = evidence_points(trace)
    ok = sum(all(verdict_checks(v, taxonomy, (w["start"], w["end"]), evidence).values()) for v in verdicts)
    return ok / len(verdicts)


def align_truth(trace, truth) -> np.ndarray:
    """Accept labels for the window itself or for the whole parent series."""
    truth = _truth(truth)
    w = trace.window
    n = w["end"] - w["start"]
    if truth.size == n:
        return truth
    if truth.size >= w["end"]:
        return truth[w["start"] : w["end"]]
    raise WindowTruthMismatch(f"{truth.size} labels cannot cover window [{w['start']}, {w['end']})")


def score_verdicts(verdicts, truth, trace, config: RewardConfig = RewardConfig(), taxonomy=None) -> RewardBreakdown:
    truth = align_truth(trace, truth)
    start = trace.window["start"]
    if taxonomy is None:
        from .workflow import _config_from_snapshot

        taxonomy = _config_from_snapshot(trace.config).knowledge
    ts = two_sided_reward(verdicts, truth, start)
    fp = false_positive_penalty(verdicts, truth, truth.size, start)
    rm = rule_matching_reward(verdicts, taxonomy, trace)
    total = (config.w_ts * ts if config.use_ts else 0.0) + (config.w_rm * rm if config.use_rm else 0.0)
    total -= config.w_fp * fp if config.use_fp else 0.0
    return RewardBreakdown(ts, fp, rm, total, config)


def score_episode(trace, truth, config: RewardConfig = RewardConfig()) -> RewardBreakdown:
    """Score a finished trace's final verdicts against labels."""
    if trace.final_verdicts is None:
        raise ValueError("trace has no final verdicts (the episode failed)")
    return score_verdicts(trace.verdicts(), truth, trace, config)


def write_report(breakdown: RewardBreakdown, trace_path) -> Path:
    out = Path(str(trace_path) + ".reward.json")
    out.write_text(json.dumps(breakdown.to_dict(), indent=2), encoding="utf-8")
    return out
