"""Prompt rendering and strict parsing of Locator / Actor / Detector / Evaluator replies."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Iterable, Optional

from .errors import (
    BadRating,
    ConfidenceOutOfRange,
    FieldMissing,
    KeyMissing,
    MalformedCall,
    MalformedReport,
    MalformedVerdict,
    MissingPlaceholder,
    MissingPlanTag,
    NoCallsFound,
    NoJsonArray,
)
from .tools import TOOL_NAMES, ToolCall

ROLES = ("locator", "actor", "detector", "evaluator", "localizer")
RATINGS = ("good", "acceptable", "poor")
QUALITY_KEYS = ("planning", "tool_usage", "reasoning")


@dataclass(frozen=True)
class ChatTurn:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"bad chat role {self.role!r}")
        if not self.content:
            raise ValueError("chat content must be non-empty")

    def to_dict(self) -> dict:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class LocatorPlan:
    think: str
    plan: str
    declared_thresholds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"think": self.think, "plan": self.plan, "declared_thresholds": dict(self.declared_thresholds)}


@dataclass(frozen=True, order=True)
class AnomalyVerdict:
    """Detected anomaly on the closed interval ``[start, end]`` of data indices."""

    start: int
    end: int
    type: str
    explanation: str
    confidence: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"start {self.start} > end {self.end}")
        if self.confidence not in (1, 2, 3):
            raise ValueError(f"confidence {self.confidence} not in 1..3")

    @property
    def interval(self) -> tuple[int, int]:
        return self.start, self.end

    def to_dict(self) -> dict:
        return {
            "interval": [self.start, self.end],
            "type": self.type,
            "explanation": self.explanation,
            "confidence": self.confidence,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnomalyVerdict":
        s, e = d["interval"]
        return cls(s, e, d["type"], d["explanation"], d["confidence"])


@dataclass(frozen=True)
class EvaluatorReport:
    issues: tuple[str, ...]
    suggestions: tuple[str, ...]
    needs_refinement: bool
    quality_metrics: dict

    def to_dict(self) -> dict:
        return {
            "issues": list(self.issues),
            "suggestions": list(self.suggestions),
            "needs_refinement": self.needs_refinement,
            "quality_metrics": dict(self.quality_metrics),
        }


# -- prompts -----------------------------------------------------------------

_TOKEN = re.compile(r"\{\{|\}\}|\{([^{}\n]+)\}")


@lru_cache(maxsize=None)
def load_template(role: str) -> str:
    if role not in ROLES:
        raise ValueError(f"unknown role {role!r}")
    return resources.files("tsagent").joinpath(f"prompts/{role}.txt").read_text(encoding="utf-8")


def placeholders(template: str) -> list[str]:
    return [m.group(1) for m in _TOKEN.finditer(template) if m.group(1)]


def substitute(template: str, context: dict) -> str:
    """Replace ``{name}`` placeholders; ``{{``/``}}`` are literal braces."""

    def repl(m: re.Match) -> str:
        tok = m.group(0)
        if tok == "{{":
            return "{"
        if tok == "}}":
            return "}"
        name = m.group(1)
        if name not in context:
            raise MissingPlaceholder(name)
        return str(context[name])

    return _TOKEN.sub(repl, template)


def render_prompt(role: str, context: dict) -> str:
    return substitute(load_template(role), context)


def render_values(window) -> str:
    return "\n".join(f"{window.start + i}: {v:.6f}" for i, v in enumerate(window.values))


def render_candidates(candidates, window) -> str:
    if not candidates:
        return "(none)"
    return "\n".join(
        f"- [{window.start + c.start}, {window.start + c.end - 1}] saliency={c.saliency:.4g}" for c in candidates
    )


def render_tool_results(entries) -> str:
    """``entries`` holds ToolResult objects or ``(ToolCall, error message)`` pairs."""
    blocks = []
    for e in entries:
        if isinstance(e, tuple):
            call, err = e
            blocks.append(f"### {call.tool} {json.dumps(call.params, sort_keys=True)}\nERROR: {err}")
        else:
            from .tools import dumps_payload

            blocks.append(
                f"### {e.tool} {json.dumps(e.params, sort_keys=True)}\n{e.summary}\npayload: {dumps_payload(e)}"
            )
    return "\n\n".join(blocks) if blocks else "(no tool results)"


def serialize_verdicts(verdicts: Iterable[AnomalyVerdict]) -> str:
    return json.dumps([v.to_dict() for v in verdicts], indent=None)


def render_messages(role: str, context: dict) -> list[ChatTurn]:
    asks = {
        "locator": "Write the analysis plan now.",
        "actor": "Issue the tool calls now.",
        "detector": "Give your verdict now.",
        "evaluator": "Review the result now.",
        "localizer": "List the suspicious intervals.",
    }
    return [ChatTurn("system", render_prompt(role, context)), ChatTurn("user", asks[role])]


# -- JSON extraction -----------------------------------------------------------

_FENCE = re.compile(r"```[a-zA-Z]*\s*\n?(.*?)```", re.DOTALL)
_decoder = json.JSONDecoder()


def find_json(text: str, kind: type, accept: Optional[Callable[[Any], bool]] = None):
    """First JSON value of type ``kind`` in ``text``: fenced blocks first, then a raw scan."""
    opener = "[" if kind is list else "{"

    def ok(v) -> bool:
        return isinstance(v, kind) and (accept is None or accept(v))

    for m in _FENCE.finditer(text):
        body = m.group(1).strip()
        try:
            v = json.loads(body)
        except json.JSONDecodeError:
            continue
        if ok(v):
            return v
    pos = text.find(opener)
    while pos != -1:
        try:
            v, _ = _decoder.raw_decode(text, pos)
        except json.JSONDecodeError:
            pass
        else:
            if ok(v):
                return v
        pos = text.find(opener, pos + 1)
    return None


def strip_think(text: str) -> str:
    return re.sub(r"<think>.*?</think>", "", text, flags=re.DOTALL | re.IGNORECASE)


# -- parsers -----------------------------------------------------------------


def _innermost(tag: str, text: str) -> Optional[str]:
    pat = re.compile(rf"<{tag}>((?:(?!<{tag}>).)*?)</{tag}>", re.DOTALL | re.IGNORECASE)
    matches = pat.findall(text)
    return matches[-1] if matches else None


_NUM = r"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"


def _threshold_patterns() -> list[re.Pattern]:
    names = "|".join(re.escape(n) for n in TOOL_NAMES)
    return [
        re.compile(rf"\b({names})\s*(?:>=|≥)\s*{_NUM}"),
        re.compile(rf"\b({names})\s+threshold\s*(?:of|=|:)?\s*{_NUM}", re.IGNORECASE),
        re.compile(rf"\b({names})\([^)\n]*\bthreshold\s*=\s*{_NUM}"),
    ]


def harvest_thresholds(plan: str) -> dict[str, float]:
    found: list[tuple[int, str, float]] = []
    for pat in _threshold_patterns():
        for m in pat.finditer(plan):
            found.append((m.start(), m.group(1), float(m.group(2))))
    return {name: value for _, name, value in sorted(found)}


def parse_locator_plan(reply: str) -> LocatorPlan:
    plan = _innermost("Plan", reply)
    if plan is None or not plan.strip():
        raise MissingPlanTag("reply has no non-empty <Plan>...</Plan> block")
    think = _innermost("think", reply) or ""
    plan = plan.strip()
    return LocatorPlan(think.strip(), plan, harvest_thresholds(plan))


_SCALAR = (int, float, str)


def _call_from(item, index: int) -> ToolCall:
    if not isinstance(item, dict):
        raise MalformedCall(index, "not an object")
    if "function" in item and isinstance(item["function"], dict):
        fn = item["function"]
        args = fn.get("arguments", {})
        if isinstance(args, str):
            try:
                args = json.loads(args) if args.strip() else {}
            except json.JSONDecodeError:
                raise MalformedCall(index, "arguments are not JSON") from None
        item = {"tool": fn.get("name"), "params": args}
    extra = set(item) - {"tool", "params"}
    if extra:
        raise MalformedCall(index, f"unexpected keys {sorted(extra)}")
    tool = item.get("tool")
    if not isinstance(tool, str) or not tool:
        raise MalformedCall(index, "missing tool name")
    params = item.get("params", {})
    if not isinstance(params, dict):
        raise MalformedCall(index, "params must be an object")
    for k, v in params.items():
        if isinstance(v, bool) or not isinstance(v, _SCALAR):
            raise MalformedCall(index, f"param {k!r} is not a scalar")
    return ToolCall(tool, dict(params))


def parse_actor_calls(reply: str, structured: Optional[list] = None) -> list[ToolCall]:
    """Tool calls from a native structured payload, or else a (fenced) JSON array in ``reply``.

    All-or-nothing: one malformed entry rejects the whole batch.
    """
    items = structured
    if items is None:
        items = find_json(strip_think(reply), list, lambda v: not v or any(isinstance(x, dict) for x in v))
    if not items:
        raise NoCallsFound("no tool calls in reply")
    return [_call_from(item, i) for i, item in enumerate(items)]


_VERDICT_FIELDS = ("interval", "type", "explanation", "confidence")


def _verdict_from(item, i: int) -> AnomalyVerdict:
    if not isinstance(item, dict):
        raise MalformedVerdict(i, "not an object")
    for name in _VERDICT_FIELDS:
        if name not in item:
            raise FieldMissing(i, name)
    conf = item["confidence"]
    if isinstance(conf, bool) or not isinstance(conf, int) or conf not in (1, 2, 3):
        raise ConfidenceOutOfRange(i, conf)
    iv = item["interval"]
    if (
        not isinstance(iv, list)
        or len(iv) != 2
        or not all(isinstance(x, int) and not isinstance(x, bool) for x in iv)
    ):
        raise MalformedVerdict(i, f"interval must be [start_index, end_index], got {iv!r}")
    if iv[0] < 0 or iv[0] > iv[1]:
        raise MalformedVerdict(i, f"bad interval {iv!r}")
    if not isinstance(item["type"], str) or not isinstance(item["explanation"], str):
        raise MalformedVerdict(i, "type and explanation must be strings")
    return AnomalyVerdict(iv[0], iv[1], item["type"], item["explanation"], conf)


def parse_detector_verdicts(reply: str) -> list[AnomalyVerdict]:
    body = strip_think(reply)
    arr = find_json(body, list, lambda v: all(isinstance(x, dict) for x in v))
    if arr is None:
        raise NoJsonArray("no JSON array of verdicts in reply")
    return [_verdict_from(item, i) for i, item in enumerate(arr)]


def _str_list(d: dict, key: str) -> tuple[str, ...]:
    v = d[key]
    if not isinstance(v, list) or not all(isinstance(x, str) for x in v):
        raise MalformedReport(f"{key!r} must be a list of strings")
    return tuple(v)


def parse_evaluator_report(reply: str) -> EvaluatorReport:
    obj = find_json(strip_think(reply), dict)
    if obj is None:
        raise MalformedReport("no JSON object in reply")
    for key in ("issues", "suggestions", "needs_refinement", "quality_metrics"):
        if key not in obj:
            raise KeyMissing(key)
    if not isinstance(obj["needs_refinement"], bool):
        raise MalformedReport("'needs_refinement' must be a boolean")
    qm = obj["quality_metrics"]
    if not isinstance(qm, dict):
        raise MalformedReport("'quality_metrics' must be an object")
    for key in QUALITY_KEYS:
        if key not in qm:
            raise KeyMissing(f"quality_metrics.{key}")
        if qm[key] not in RATINGS:
            raise BadRating(key, qm[key])
    return EvaluatorReport(
        _str_list(obj, "issues"),
        _str_list(obj, "suggestions"),
        obj["needs_refinement"],
        {k: qm[k] for k in QUALITY_KEYS},
    )


PARSERS = {
    "locator": parse_locator_plan,
    "actor": parse_actor_calls,
    "detector": parse_detector_verdicts,
    "evaluator": parse_evaluator_report,
}
