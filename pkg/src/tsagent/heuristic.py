"""Deterministic rule policy that answers each agent role from its rendered prompt.

It reads the same prompt text a language model would and replies in the same
protocol, so the whole workflow runs offline.
"""

from __future__ import annotations

import json
import math
import re
from typing import Optional, Sequence

import numpy as np

from .protocol import ChatTurn, find_json

THRESHOLD = 3.0
CALL_LINE = re.compile(r"^\s*-\s*([a-z_]+)\((.*)\)\s*$", re.MULTILINE)
TOOL_WORDS = ("diff_zscore", "local_structure", "stat_features", "global_structure", "query_knowledge")


def section(text: str, title: str) -> str:
    m = re.search(rf"^## {re.escape(title)}\s*\n(.*?)(?=^## |\Z)", text, re.DOTALL | re.MULTILINE)
    return m.group(1).strip() if m else ""


def role_of(text: str) -> str:
    m = re.match(r"\s*ROLE:\s*(\w+)", text)
    return m.group(1) if m else ""


def _values(text: str) -> dict[int, float]:
    out = {}
    for line in section(text, "Time series values").splitlines():
        m = re.match(r"\s*(\d+):\s*(\S+)", line)
        if m:
            out[int(m.group(1))] = float(m.group(2))
    return out


def _candidate_spans(text: str) -> list[tuple[int, int]]:
    return [(int(a), int(b)) for a, b in re.findall(r"\[(\d+),\s*(\d+)\]", section(text, "Candidate intervals"))]


def _parse_args(arg_text: str) -> dict:
    params = {}
    for part in filter(None, (p.strip() for p in arg_text.split(","))):
        if "=" not in part:
            continue
        k, v = (s.strip() for s in part.split("=", 1))
        try:
            params[k] = int(v)
        except ValueError:
            try:
                params[k] = float(v)
            except ValueError:
                params[k] = v.strip("'\"")
    return params


def plan_calls(plan_text: str) -> list[dict]:
    return [{"tool": name, "params": _parse_args(args)} for name, args in CALL_LINE.findall(plan_text)]


# -- roles -------------------------------------------------------------------


def locator(text: str) -> str:
    spans = _candidate_spans(text)
    lines = [
        f"Thresholds: diff_zscore threshold {THRESHOLD}; local_structure >= {THRESHOLD}.",
        f"Ignore differences with |z| below {THRESHOLD} and context deviations below {THRESHOLD}.",
        f"- diff_zscore(scope=global, threshold={THRESHOLD})",
        "- stat_features()",
        "- global_structure()",
    ]
    lines += [f"- local_structure(start={s}, end={e})" for s, e in spans]
    think = f"{len(spans)} candidate intervals; check each with difference z-scores and context deviation."
    return f"<think>{think}</think>\n<Plan>\n" + "\n".join(lines) + "\n</Plan>"


def actor(text: str) -> str:
    calls = plan_calls(section(text, "Plan"))
    return "```json\n" + json.dumps(calls) + "\n```"


def _tool_blocks(text: str) -> list[tuple[str, dict, Optional[dict]]]:
    out = []
    body = section(text, "Tool results")
    for block in re.split(r"^### ", body, flags=re.MULTILINE):
        if not block.strip():
            continue
        head, _, rest = block.partition("\n")
        name, _, params = head.partition(" ")
        try:
            params = json.loads(params) if params.strip() else {}
        except json.JSONDecodeError:
            params = {}
        m = re.search(r"^payload: (.*)$", rest, re.MULTILINE)
        payload = json.loads(m.group(1)) if m else None
        out.append((name.strip(), params, payload))
    return out


def _num(x) -> float:
    return float(x) if not isinstance(x, str) else float(x)


def detector(text: str) -> str:
    values = _values(text)
    blocks = _tool_blocks(text)
    spans = [(c["params"]["start"], c["params"]["end"]) for c in plan_calls(section(text, "Plan"))
             if c["tool"] == "local_structure" and {"start", "end"} <= set(c["params"])]
    outliers: list[int] = []
    stats = None
    period = None
    local: dict[tuple[int, int], dict] = {}
    for name, params, payload in blocks:
        if payload is None:
            continue
        if name == "diff_zscore" and params.get("scope", "global") == "global":
            outliers = list(payload["outlier_indices"])
        elif name == "stat_features" and "start" not in params:
            stats = payload
        elif name == "global_structure":
            period = payload.get("dominant_period")
        elif name == "local_structure":
            local[(params.get("start"), params.get("end"))] = payload

    vals = np.array([values[i] for i in sorted(values)]) if values else np.zeros(1)
    median = float(np.median(vals))
    mean = stats["mean"] if stats else float(vals.mean())
    std = stats["std"] if stats else float(vals.std())
    spread = (stats["max"] - stats["min"]) if stats else float(np.ptp(vals))

    verdicts, notes = [], []
    for s, e in spans:
        hits = [i for i in outliers if s - 1 <= i <= e]
        loc = local.get((s, e))
        dev = _num(loc["context_deviation"]) if loc and loc.get("context_deviation") is not None else 0.0
        if not hits and dev < THRESHOLD:
            notes.append(f"[{s}, {e}] rejected: no outlier differences, context deviation {dev:.3g}")
            continue
        if hits:
            pts = []
            for i in hits:
                a, b = values.get(i, median), values.get(i + 1, median)
                pts.append(i if abs(a - median) >= abs(b - median) else i + 1)
            pts = [p for p in pts if s <= p <= e] or [s]
            lo, hi = min(pts), max(pts)
        else:
            lo, hi = s, e
        evidence = []
        if hits:
            evidence.append(f"diff_zscore: outlier differences {hits} inside [{s}, {e}]")
        if dev >= THRESHOLD:
            evidence.append(f"local_structure: context_deviation {'inf' if math.isinf(dev) else f'{dev:.3g}'} >= {THRESHOLD}")
        if std > 0:
            extreme = max(range(lo, hi + 1), key=lambda i: abs(values.get(i, mean) - mean))
            z = abs(values.get(extreme, mean) - mean) / std
            if z >= THRESHOLD:
                evidence.append(f"stat_features: value at {extreme} lies {z:.3g} std from the mean")
        slope = _num(loc["trend_slope"]) if loc else 0.0
        if lo == hi:
            kind = "point_global"
        elif period is not None:
            kind = "pattern_seasonal"
        elif spread > 0 and abs(slope) * (hi - lo) >= 0.5 * spread:
            kind = "pattern_trend"
        else:
            kind = "pattern_contextual"
        verdicts.append({
            "interval": [lo, hi],
            "type": kind,
            "explanation": "; ".join(evidence),
            "confidence": min(3, 1 + len(evidence)),
        })
        notes.append(f"[{s}, {e}] accepted as {kind} at [{lo}, {hi}]")
    think = " ".join(notes) if notes else "No candidate intervals to judge."
    return f"<think>{think}</think>\n```json\n{json.dumps(verdicts)}\n```"


def evaluator(text: str) -> str:
    verdicts = find_json(section(text, "Detector result"), list) or []
    m = re.search(r"(\d+)", section(text, "Iteration"))
    iteration = int(m.group(1)) if m else 1
    unsupported = [
        v for v in verdicts
        if isinstance(v, dict) and not any(w in str(v.get("explanation", "")) for w in TOOL_WORDS)
    ]
    refine = bool(unsupported) and iteration == 1
    report = {
        "issues": [f"verdict {v.get('interval')} cites no tool evidence" for v in unsupported],
        "suggestions": ["re-run the verification tools on unsupported intervals"] if unsupported else [],
        "needs_refinement": refine,
        "quality_metrics": {
            "planning": "good",
            "tool_usage": "good" if not unsupported else "acceptable",
            "reasoning": "good" if not unsupported else "poor",
        },
    }
    return json.dumps(report)


def localizer(text: str) -> str:
    from .series import Window
    from .tools import proxy_candidates

    values = _values(text)
    if len(values) < 8:
        return "[]"
    start = min(values)
    w = Window.of([values[i] for i in sorted(values)], start=start)
    return json.dumps([[start + c.start, start + c.end - 1] for c in proxy_candidates(w)])


HANDLERS = {"locator": locator, "actor": actor, "detector": detector, "evaluator": evaluator, "localizer": localizer}


def respond(messages: Sequence[ChatTurn]) -> str:
    prompt = next((m.content for m in messages if m.role == "system"), messages[0].content)
    role = role_of(prompt)
    handler = HANDLERS.get(role)
    if handler is None:
        return "I cannot tell which role this prompt is for."
    return handler(prompt)
