"""Analysis tools invoked by the workflow, and the dispatcher that routes named calls.

Tool payloads report absolute data indices (``window.start`` offset applied).
Tool call parameters ``start``/``end`` are absolute, closed intervals, the same
convention detector verdicts use.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Union

import numpy as np

from .baselines import spectral_residual_score
from .errors import (
    BackendReplyUnparseable,
    IntervalOutOfBounds,
    ParamValidation,
    TSAgentError,
    UnknownTool,
    WindowTooShort,
)
from .knowledge import KnowledgeRecord, KnowledgeStore, render_records
from .series import Window, linear_fit

SPREAD_TOL = 1e-12


# -- payload types -----------------------------------------------------------


@dataclass(frozen=True)
class StatSummary:
    mean: float
    std: float
    min: float
    max: float
    median: float
    iqr: float
    n: int


@dataclass(frozen=True)
class ZScoreReport:
    scope: str
    scores: tuple[tuple[int, float], ...]
    outlier_indices: tuple[int, ...]
    threshold: float
    degenerate: bool = False


@dataclass(frozen=True)
class StructureReport:
    scope: str
    trend_slope: float
    dominant_period: Optional[int] = None
    level_shift_index: Optional[int] = None
    context_deviation: Optional[float] = None
    start: Optional[int] = None  # analysed interval, absolute, closed (local scope)
    end: Optional[int] = None


@dataclass(frozen=True)
class CandidateInterval:
    start: int  # window-relative
    end: int  # exclusive
    saliency: float

    def __post_init__(self):
        if not self.start < self.end:
            raise ValueError(f"empty candidate [{self.start}, {self.end})")


Payload = Union[StatSummary, ZScoreReport, StructureReport, list, tuple]


def _enc_float(x):
    if x is None:
        return None
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(x)


def _dec_float(x):
    if x is None:
        return None
    if isinstance(x, str):
        return float(x)
    return float(x)


def payload_to_dict(payload) -> dict:
    if isinstance(payload, StatSummary):
        return {"type": "stat_summary", **payload.__dict__}
    if isinstance(payload, ZScoreReport):
        return {
            "type": "zscore_report",
            "scope": payload.scope,
            "scores": [[i, z] for i, z in payload.scores],
            "outlier_indices": list(payload.outlier_indices),
            "threshold": payload.threshold,
            "degenerate": payload.degenerate,
        }
    if isinstance(payload, StructureReport):
        d = dict(payload.__dict__)
        d["context_deviation"] = _enc_float(d["context_deviation"])
        return {"type": "structure_report", **d}
    items = list(payload)
    if all(isinstance(p, KnowledgeRecord) for p in items):
        return {"type": "knowledge", "records": [r.to_dict() for r in items]}
    if all(isinstance(p, CandidateInterval) for p in items):
        return {"type": "candidates", "intervals": [c.__dict__ for c in items]}
    raise TypeError(f"cannot serialize payload {payload!r}")


def payload_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("type")
    if kind == "stat_summary":
        return StatSummary(**d)
    if kind == "zscore_report":
        return ZScoreReport(
            scope=d["scope"],
            scores=tuple((int(i), float(z)) for i, z in d["scores"]),
            outlier_indices=tuple(d["outlier_indices"]),
            threshold=d["threshold"],
            degenerate=d["degenerate"],
        )
    if kind == "structure_report":
        d["context_deviation"] = _dec_float(d["context_deviation"])
        return StructureReport(**d)
    if kind == "knowledge":
        return [KnowledgeRecord(**r) for r in d["records"]]
    if kind == "candidates":
        return [CandidateInterval(**c) for c in d["intervals"]]
    raise ValueError(f"unknown payload type {kind!r}")


@dataclass(frozen=True)
class ToolResult:
    tool: str
    payload: Any
    summary: str
    params: dict = field(default_factory=dict)
    duration: float = field(default=0.0, compare=False)

    def to_dict(self) -> dict:
        return {
            "tool": self.tool,
            "params": self.params,
            "payload": payload_to_dict(self.payload),
            "summary": self.summary,
            "duration": self.duration,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ToolResult":
        return cls(d["tool"], payload_from_dict(d["payload"]), d["summary"], d.get("params", {}), d.get("duration", 0.0))


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return "none"
    if math.isinf(x):
        return "inf"
    return f"{x:.4g}"


# -- statistical features ----------------------------------------------------


def stat_summary(values) -> StatSummary:
    v = np.asarray(values, dtype=float)
    if len(v) < 2:
        raise WindowTooShort(f"need at least 2 values, got {len(v)}")
    q25, q50, q75 = np.percentile(v, [25, 50, 75])
    return StatSummary(
        mean=float(v.mean()),
        std=float(v.std()),
        min=float(v.min()),
        max=float(v.max()),
        median=float(q50),
        iqr=float(q75 - q25),
        n=len(v),
    )


def stat_features(window: Window) -> ToolResult:
    s = stat_summary(window.values)
    text = (
        f"stat_features over [{window.start}, {window.end - 1}] (n={s.n}): mean={_fmt(s.mean)} "
        f"std={_fmt(s.std)} min={_fmt(s.min)} max={_fmt(s.max)} median={_fmt(s.median)} iqr={_fmt(s.iqr)}"
    )
    return ToolResult("stat_features", s, text)


# -- difference z-scores -----------------------------------------------------


def _is_flat(std: float, ref: float) -> bool:
    return std <= SPREAD_TOL * max(1.0, ref)


def diff_zscore(window: Window, scope: str = "global", radius: int = 10, threshold: float = 3.0) -> ToolResult:
    """Z-scores of first differences, standardized globally or within +-radius.

    Points whose standardizing spread is zero get z = 0 and mark the report degenerate.
    """
    v = window.values
    if len(v) < 3:
        raise WindowTooShort(f"need at least 3 values, got {len(v)}")
    if scope not in ("global", "local"):
        raise ValueError(f"scope must be global or local, got {scope!r}")
    if scope == "local" and radius < 2:
        raise ValueError("local radius must be >= 2")
    d = np.diff(v)
    ref = float(np.abs(d).max())
    z = np.zeros(len(d))
    degenerate = False
    if scope == "global":
        mu, sd = d.mean(), d.std()
        if _is_flat(sd, ref):
            degenerate = True
        else:
            z = (d - mu) / sd
    else:
        for i in range(len(d)):
            lo, hi = max(0, i - radius), min(len(d), i + radius + 1)
            nb = np.concatenate([d[lo:i], d[i + 1 : hi]])
            sd = nb.std()
            if _is_flat(sd, ref):
                degenerate = True
                continue
            z[i] = (d[i] - nb.mean()) / sd
    off = window.start
    outliers = tuple(int(i + off) for i in np.flatnonzero(np.abs(z) >= threshold))
    report = ZScoreReport(
        scope=scope,
        scores=tuple((int(i + off), float(zi)) for i, zi in enumerate(z)),
        outlier_indices=outliers,
        threshold=float(threshold),
        degenerate=degenerate,
    )
    top = sorted(report.scores, key=lambda p: -abs(p[1]))[:5]
    text = (
        f"diff_zscore scope={scope} threshold={_fmt(threshold)}"
        + (f" radius={radius}" if scope == "local" else "")
        + f": {len(outliers)} outlier differences {list(outliers)}"
        + "; largest |z|: "
        + ", ".join(f"d[{i}]={_fmt(zv)}" for i, zv in top)
        + ("; degenerate=true" if degenerate else "")
        + " (difference i spans points i and i+1)"
    )
    return ToolResult("diff_zscore", report, text)


# -- structure ---------------------------------------------------------------


def circular_autocorrelation(values) -> np.ndarray:
    x = np.asarray(values, dtype=float)
    x = x - x.mean()
    denom = float(np.dot(x, x))
    if denom == 0:
        return np.zeros(len(x))
    return np.array([np.dot(x, np.roll(x, lag)) / denom for lag in range(len(x))])


def dominant_period(values, floor: float = 0.5) -> Optional[int]:
    n = len(values)
    ac = circular_autocorrelation(values)
    lags = np.arange(2, n // 2 + 1)
    if len(lags) == 0:
        return None
    r = ac[lags]
    best = r.max()
    if best < floor:
        return None
    # smallest lag attaining the maximum; multiples of the period tie
    return int(lags[np.flatnonzero(r >= best - 1e-9)[0]])


def level_shift(values, factor: float = 3.0) -> Optional[int]:
    """Split index maximizing the gap between the two side means, if it dwarfs the pooled std."""
    v = np.asarray(values, dtype=float)
    n = len(v)
    min_seg = max(2, n // 10)
    best_gap, best_at = 0.0, None
    for s in range(min_seg, n - min_seg + 1):
        gap = abs(v[s:].mean() - v[:s].mean())
        if gap > best_gap:
            best_gap, best_at = gap, s
    if best_at is None:
        return None
    left, right = v[:best_at], v[best_at:]
    pooled = math.sqrt((len(left) * left.var() + len(right) * right.var()) / n)
    return best_at if best_gap >= factor * pooled else None


def global_structure(window: Window) -> ToolResult:
    v = window.values
    if len(v) < 8:
        raise WindowTooShort(f"need at least 8 values, got {len(v)}")
    slope, _ = linear_fit(v)
    period = dominant_period(v)
    shift = level_shift(v)
    report = StructureReport(
        scope="global",
        trend_slope=slope,
        dominant_period=period,
        level_shift_index=None if shift is None else shift + window.start,
    )
    text = (
        f"global_structure over [{window.start}, {window.end - 1}]: trend_slope={_fmt(slope)} "
        f"dominant_period={period if period is not None else 'none'} "
        f"level_shift_index={report.level_shift_index if shift is not None else 'none'}"
    )
    return ToolResult("global_structure", report, text)


def local_structure(window: Window, start: int, end: int) -> ToolResult:
    """Compare window-relative ``[start, end)`` with equally long flanking context."""
    n = len(window)
    if not (0 <= start < end <= n):
        raise IntervalOutOfBounds(f"[{start}, {end}) outside window of length {n}")
    width = end - start
    v = window.values
    ctx = np.concatenate([v[max(0, start - width) : start], v[end : min(n, end + width)]])
    if len(ctx) == 0:
        raise IntervalOutOfBounds(f"[{start}, {end}) leaves no context inside the window")
    seg = v[start:end]
    dev = float(np.mean(np.abs(seg - ctx.mean())))
    sd = float(ctx.std())
    if _is_flat(sd, float(np.abs(v).max())):
        deviation = math.inf if dev > SPREAD_TOL * max(1.0, float(np.abs(v).max())) else 0.0
    else:
        deviation = dev / sd
    slope = linear_fit(seg)[0] if width >= 2 else 0.0
    report = StructureReport(
        scope="local",
        trend_slope=slope,
        context_deviation=deviation,
        start=window.start + start,
        end=window.start + end - 1,
    )
    text = (
        f"local_structure [{report.start}, {report.end}]: context_deviation={_fmt(deviation)} "
        f"(context std units) trend_slope={_fmt(slope)}"
    )
    return ToolResult("local_structure", report, text)


# -- localization ------------------------------------------------------------


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    out = []
    i, n = 0, len(mask)
    while i < n:
        if mask[i]:
            j = i
            while j < n and mask[j]:
                j += 1
            out.append((i, j))
            i = j
        else:
            i += 1
    return out


def _merge_spans(spans: list[tuple[int, int]], gap: int) -> list[tuple[int, int]]:
    merged: list[list[int]] = []
    for s, e in sorted(spans):
        if merged and s - merged[-1][1] < gap:
            merged[-1][1] = max(merged[-1][1], e)
        else:
            merged.append([s, e])
    return [tuple(m) for m in merged]


def proxy_candidates(
    window: Window, max_candidates: int = 3, k: float = 2.0, gap: int = 5, margin: int = 3
) -> list[CandidateInterval]:
    """Deterministic stand-in for visual localization, driven by SR saliency."""
    n = len(window)
    if n < 8:
        return []
    sal = spectral_residual_score(window.values).scores
    sd = sal.std()
    if _is_flat(sd, float(sal.max())):
        return []
    spans = _merge_spans(_runs(sal > sal.mean() + k * sd), gap)
    widened = _merge_spans([(max(0, s - margin), min(n, e + margin)) for s, e in spans], 1)
    scored = [CandidateInterval(s, e, float(sal[s:e].max())) for s, e in widened]
    top = sorted(scored, key=lambda c: (-c.saliency, c.start))[:max_candidates]
    return sorted(top, key=lambda c: c.start)


def parse_interval_reply(reply: str, window: Window) -> list[CandidateInterval]:
    """Parse a perception backend reply: a JSON array of closed absolute ``[start, end]`` pairs
    (or objects with an ``interval`` key). Intervals are clipped to the window and merged."""
    from .protocol import find_json

    data = find_json(reply, list)
    if data is None:
        raise BackendReplyUnparseable("no JSON array in localization reply")
    spans = []
    for item in data:
        if isinstance(item, dict):
            item = item.get("interval")
        if (
            not isinstance(item, list)
            or len(item) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in item)
            or item[0] > item[1]
        ):
            raise BackendReplyUnparseable(f"bad interval {item!r}")
        s = max(item[0], window.start) - window.start
        e = min(item[1] + 1, window.end) - window.start
        if s < e:
            spans.append((s, e))
    return [CandidateInterval(s, e, 1.0) for s, e in _merge_spans(spans, 1)]


def localize_candidates(
    window: Window,
    backend=None,
    max_candidates: int = 3,
    fallbacks: Optional[list] = None,
) -> list[CandidateInterval]:
    """Coarse candidate intervals, window-relative and half-open.

    With a perception ``backend`` its reply is parsed; an unparseable reply
    falls back to the saliency proxy and the error is appended to ``fallbacks``.
    """
    if backend is None:
        return proxy_candidates(window, max_candidates)
    from .protocol import ChatTurn, render_prompt, render_values

    prompt = render_prompt("localizer", {"Time Series Values": render_values(window), "range": f"[{window.start}, {window.end - 1}]"})
    reply = backend.complete([ChatTurn("system", prompt), ChatTurn("user", "List the suspicious intervals.")])
    try:
        cands = parse_interval_reply(reply, window)
    except BackendReplyUnparseable as exc:
        if fallbacks is not None:
            fallbacks.append(str(exc))
        return proxy_candidates(window, max_candidates)
    return sorted(sorted(cands, key=lambda c: (-c.saliency, c.start))[:max_candidates], key=lambda c: c.start)


# -- knowledge ---------------------------------------------------------------


def query_knowledge(store: KnowledgeStore, tags=(), kind: Optional[str] = None) -> ToolResult:
    recs = store.query(tags, kind)
    text = f"query_knowledge tags={list(tags)} kind={kind or 'any'}: {len(recs)} records\n" + render_records(recs)
    return ToolResult("query_knowledge", recs, text)


# -- dispatch ----------------------------------------------------------------


@dataclass(frozen=True)
class ToolCall:
    tool: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"tool": self.tool, "params": dict(self.params)}


@dataclass(frozen=True)
class ToolContext:
    window: Window
    knowledge: KnowledgeStore


def _num(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ParamValidation(f"{name} must be a finite number, got {v!r}")
    return float(v)


def _int(name, v):
    if isinstance(v, bool) or not (isinstance(v, int) or (isinstance(v, float) and v.is_integer())):
        raise ParamValidation(f"{name} must be an integer, got {v!r}")
    return int(v)


def _text(name, v):
    if not isinstance(v, str):
        raise ParamValidation(f"{name} must be text, got {v!r}")
    return v


def _interval(ctx: ToolContext, p: dict, required: bool) -> Optional[tuple[int, int]]:
    """Absolute closed [start, end] params -> window-relative half-open bounds."""
    if "start" not in p and "end" not in p:
        if required:
            raise ParamValidation("start and end are required")
        return None
    if "start" not in p or "end" not in p:
        raise ParamValidation("start and end must be given together")
    s, e = p["start"], p["end"]
    w = ctx.window
    if not (w.start <= s <= e < w.end):
        raise ParamValidation(f"interval [{s}, {e}] outside window [{w.start}, {w.end - 1}]")
    return s - w.start, e - w.start + 1


def _run_stat(ctx: ToolContext, p: dict) -> ToolResult:
    iv = _interval(ctx, p, required=False)
    w = ctx.window
    if iv is not None:
        s, e = iv
        w = Window(w.parent, w.start + s, w.start + e, w.values[s:e])
    return stat_features(w)


def _run_diff(ctx: ToolContext, p: dict) -> ToolResult:
    return diff_zscore(ctx.window, p.get("scope", "global"), p.get("radius", 10), p.get("threshold", 3.0))


def _run_global(ctx: ToolContext, p: dict) -> ToolResult:
    return global_structure(ctx.window)


def _run_local(ctx: ToolContext, p: dict) -> ToolResult:
    s, e = _interval(ctx, p, required=True)
    return local_structure(ctx.window, s, e)


def _run_query(ctx: ToolContext, p: dict) -> ToolResult:
    tags = [t.strip() for t in p.get("tags", "").split(",") if t.strip()]
    return query_knowledge(ctx.knowledge, tags, p.get("kind") or None)


def _scope(name, v):
    v = _text(name, v)
    if v not in ("global", "local"):
        raise ParamValidation(f"scope must be global or local, got {v!r}")
    return v


def _kind(name, v):
    v = _text(name, v)
    if v and v not in ("anomaly_type", "domain", "tool_semantics"):
        raise ParamValidation(f"unknown knowledge kind {v!r}")
    return v


@dataclass(frozen=True)
class ToolSpec:
    run: Callable[[ToolContext, dict], ToolResult]
    params: dict  # name -> validator
    description: str


REGISTRY: dict[str, ToolSpec] = {
    "stat_features": ToolSpec(
        _run_stat,
        {"start": _int, "end": _int},
        "stat_features(start?, end?): mean/std/min/max/median/iqr of the window or a closed interval",
    ),
    "diff_zscore": ToolSpec(
        _run_diff,
        {"scope": _scope, "radius": _int, "threshold": _num},
        "diff_zscore(scope=global|local, radius=10, threshold=3.0): z-scores of first differences",
    ),
    "global_structure": ToolSpec(
        _run_global, {}, "global_structure(): window trend slope, dominant period, level shift"
    ),
    "local_structure": ToolSpec(
        _run_local,
        {"start": _int, "end": _int},
        "local_structure(start, end): deviation of a closed interval from its flanking context",
    ),
    "query_knowledge": ToolSpec(
        _run_query,
        {"tags": _text, "kind": _kind},
        "query_knowledge(tags='a,b', kind?): knowledge records carrying all tags",
    ),
}

TOOL_NAMES = tuple(sorted(REGISTRY))


def validate_call(call: ToolCall) -> dict:
    spec = REGISTRY.get(call.tool)
    if spec is None:
        raise UnknownTool(f"unknown tool {call.tool!r}")
    clean = {}
    for name, value in call.params.items():
        check = spec.params.get(name)
        if check is None:
            raise ParamValidation(f"{call.tool} does not accept parameter {name!r}")
        clean[name] = check(name, value)
    return clean


def dispatch(call: ToolCall, context: ToolContext) -> ToolResult:
    """Validate and run one tool call; the result carries its params and wall-clock duration."""
    params = validate_call(call)
    t0 = time.perf_counter()
    try:
        result = REGISTRY[call.tool].run(context, params)
    except TSAgentError:
        raise
    except ValueError as exc:
        raise ParamValidation(str(exc)) from exc
    return ToolResult(result.tool, result.payload, result.summary, dict(call.params), time.perf_counter() - t0)


def describe_tools() -> str:
    return "\n".join(f"- {REGISTRY[n].description}" for n in TOOL_NAMES)


def dumps_payload(result: ToolResult) -> str:
    return json.dumps(payload_to_dict(result.payload), sort_keys=True)
