"""Coarse-to-fine episode: localize, plan, call tools, detect, review, maybe refine."""

from __future__ import annotations

import json
import logging
import time
from collections import defaultdict, deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, Optional

import numpy as np

from .backends import BackendConfig, HeuristicBackend, digest_for, make_backend, request_digest
from .errors import (
    BackendError,
    EpisodeError,
    ProtocolError,
    RoleFailure,
    ToolBudgetExceeded,
    TraceCorrupt,
    TSAgentError,
)
from .knowledge import KnowledgeRecord, KnowledgeStore, render_records
from .protocol import (
    PARSERS,
    AnomalyVerdict,
    ChatTurn,
    render_candidates,
    render_messages,
    render_tool_results,
    render_values,
    serialize_verdicts,
)
from .series import TimeSeries, Window, preprocess, segment_windows
from .tools import (
    BackendReplyUnparseable,
    CandidateInterval,
    ToolCall,
    ToolContext,
    ToolResult,
    describe_tools,
    dispatch,
    parse_interval_reply,
    proxy_candidates,
)

log = logging.getLogger(__name__)

ROLES = ("locator", "actor", "detector", "evaluator")


@dataclass
class WorkflowConfig:
    max_refinements: int = 2
    tool_budget: int = 12
    backends: dict = field(default_factory=dict)  # role -> BackendConfig | backend object
    localization: str = "proxy"  # or "backend", using backends["localizer"]
    max_candidates: int = 3
    knowledge: Optional[KnowledgeStore] = None
    window_length: int = 100
    window_step: int = 100
    detrend: bool = True

    def __post_init__(self):
        if self.max_refinements < 0:
            raise ValueError("max_refinements must be >= 0")
        if self.tool_budget < 1:
            raise ValueError("tool_budget must be >= 1")
        if self.localization not in ("proxy", "backend"):
            raise ValueError("localization must be 'proxy' or 'backend'")
        if self.localization == "backend" and "localizer" not in self.backends:
            raise ValueError("backend localization needs backends['localizer']")
        if self.knowledge is None:
            self.knowledge = KnowledgeStore.default()

    def backend(self, role: str):
        return make_backend(self.backends.get(role, BackendConfig("heuristic")))

    def snapshot(self) -> dict:
        def describe(b):
            if isinstance(b, BackendConfig):
                return b.to_dict()
            return {"kind": type(b).__name__, "model": getattr(b, "model", None),
                    "temperature": getattr(b, "temperature", None)}

        return {
            "max_refinements": self.max_refinements,
            "tool_budget": self.tool_budget,
            "localization": self.localization,
            "max_candidates": self.max_candidates,
            "backends": {r: describe(b) for r, b in sorted(self.backends.items())},
            "knowledge": [r.to_dict() for r in self.knowledge.records],
        }


@dataclass
class TraceEvent:
    seq: int
    stage: str  # localize | locator | actor | tool | detector | evaluator
    iteration: int
    role: Optional[str] = None
    digest: Optional[str] = None
    model: Optional[str] = None
    temperature: Optional[float] = None
    raw: Optional[str] = None
    parsed: Any = None
    error: Optional[str] = None
    t_start: float = 0.0
    t_end: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__, type="event")

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEvent":
        d = {k: v for k, v in d.items() if k != "type"}
        return cls(**d)


@dataclass
class EpisodeTrace:
    config: dict
    window: dict  # parent, start, end, values
    events: list = field(default_factory=list)
    final_verdicts: Optional[list] = None
    flags: list = field(default_factory=list)
    error: Optional[str] = None
    iterations: int = 0

    def verdicts(self) -> list[AnomalyVerdict]:
        return [AnomalyVerdict.from_dict(v) for v in (self.final_verdicts or [])]

    def get_window(self) -> Window:
        w = self.window
        return Window(w["parent"], w["start"], w["end"], np.array(w["values"], dtype=float))

    def tool_results(self) -> list[ToolResult]:
        return [ToolResult.from_dict(e.parsed) for e in self.events if e.stage == "tool" and e.error is None]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "header", "config": self.config, "window": self.window})]
        lines += [json.dumps(e.to_dict()) for e in self.events]
        lines.append(json.dumps({
            "type": "final",
            "verdicts": self.final_verdicts,
            "flags": self.flags,
            "error": self.error,
            "iterations": self.iterations,
        }))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "EpisodeTrace":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("type") != "header":
            raise TraceCorrupt(0, "missing header line")
        if rows[-1].get("type") != "final":
            raise TraceCorrupt(len(rows) - 1, "missing final verdict line")
        head, final = rows[0], rows[-1]
        events = []
        for i, r in enumerate(rows[1:-1], start=1):
            if r.get("type") != "event":
                raise TraceCorrupt(i, f"unexpected line type {r.get('type')!r}")
            try:
                events.append(TraceEvent.from_dict(r))
            except TypeError as exc:
                raise TraceCorrupt(i, str(exc)) from None
        return cls(head["config"], head["window"], events, final["verdicts"], final["flags"],
                   final["error"], final.get("iterations", 0))

    def file_name(self) -> str:
        return f"{self.window['parent']}_{self.window['start']}.trace.jsonl"

    def write(self, directory) -> Path:
        path = Path(directory) / self.file_name()
        path.write_text(self.to_jsonl(), encoding="utf-8")
        return path

    @classmethod
    def read(cls, path) -> "EpisodeTrace":
        return cls.from_jsonl(Path(path).read_text(encoding="utf-8"))


# -- verdict post-processing -------------------------------------------------


def merge_verdicts(verdicts, gap: int = 3) -> list[AnomalyVerdict]:
    """Merge same-type verdicts that overlap or sit within ``gap`` indices of each other."""
    by_type: dict[str, list[AnomalyVerdict]] = defaultdict(list)
    for v in verdicts:
        by_type[v.type].append(v)
    out = []
    for kind, group in by_type.items():
        group.sort(key=lambda v: (v.start, v.end))
        cur = group[0]
        for v in group[1:]:
            if v.start - cur.end <= gap:
                expl = cur.explanation if v.explanation in cur.explanation.split(" | ") else f"{cur.explanation} | {v.explanation}"
                cur = AnomalyVerdict(cur.start, max(cur.end, v.end), kind, expl, max(cur.confidence, v.confidence))
            else:
                out.append(cur)
                cur = v
        out.append(cur)
    return sorted(out, key=lambda v: (v.start, v.end, v.type))


def clip_to_window(verdicts, window: Window) -> list[AnomalyVerdict]:
    """Keep verdicts that touch the window, clipped to its closed bounds."""
    out = []
    for v in verdicts:
        if v.end < window.start or v.start >= window.end:
            continue
        out.append(AnomalyVerdict(max(v.start, window.start), min(v.end, window.end - 1), v.type, v.explanation, v.confidence))
    return out


# -- episode -----------------------------------------------------------------


class _Episode:
    def __init__(self, window: Window, config: WorkflowConfig, backends: dict):
        self.window = window
        self.config = config
        self.backends = backends
        self.trace = EpisodeTrace(
            config=config.snapshot(),
            window={"parent": window.parent, "start": window.start, "end": window.end,
                    "values": [float(v) for v in window.values]},
        )
        self.tools_used = 0
        self.ctx = ToolContext(window, config.knowledge)

    def event(self, **kw) -> TraceEvent:
        ev = TraceEvent(seq=len(self.trace.events), **kw)
        self.trace.events.append(ev)
        return ev

    def fail(self, exc: EpisodeError):
        exc.trace = self.trace
        self.trace.error = f"{type(exc).__name__}: {exc}"
        return exc

    def _complete(self, backend, messages, stage, role, it):
        t0 = time.time()
        digest = digest_for(backend, messages)
        ev = dict(stage=stage, iteration=it, role=role, digest=digest,
                  model=getattr(backend, "model", None), temperature=getattr(backend, "temperature", None), t_start=t0)
        try:
            reply = backend.complete(messages)
        except BackendError as exc:
            self.event(**ev, error=f"{type(exc).__name__}: {exc}", t_end=time.time())
            raise self.fail(EpisodeError(f"{role} backend failed: {exc}")) from exc
        return reply, ev

    def ask(self, role: str, context: dict, it: int):
        backend = self.backends[role]
        messages = render_messages(role, context)
        for attempt in (1, 2):
            reply, ev = self._complete(backend, messages, role, role, it)
            try:
                parsed = PARSERS[role](reply)
            except ProtocolError as exc:
                self.event(**ev, raw=reply, error=f"{type(exc).__name__}: {exc}", t_end=time.time())
                if attempt == 2:
                    raise self.fail(RoleFailure(role, str(exc)))
                messages = messages + [
                    ChatTurn("assistant", reply or "(empty reply)"),
                    ChatTurn("user", f"Your reply could not be parsed: {exc}. Answer again, following the output format exactly."),
                ]
                continue
            self.event(**ev, raw=reply, parsed=_jsonable(parsed), t_end=time.time())
            return parsed

    def localize(self) -> list[CandidateInterval]:
        t0 = time.time()
        w = self.window
        if self.config.localization == "proxy":
            cands = proxy_candidates(w, self.config.max_candidates)
            self.event(stage="localize", iteration=1, parsed=[c.__dict__ for c in cands], t_start=t0, t_end=time.time())
            return cands
        backend = self.backends["localizer"]
        messages = render_messages("localizer", {"Time Series Values": render_values(w), "range": f"[{w.start}, {w.end - 1}]"})
        reply, ev = self._complete(backend, messages, "localize", "localizer", 1)
        try:
            cands = parse_interval_reply(reply, w)
            cands = sorted(sorted(cands, key=lambda c: (-c.saliency, c.start))[: self.config.max_candidates], key=lambda c: c.start)
            error = None
        except BackendReplyUnparseable as exc:
            cands = proxy_candidates(w, self.config.max_candidates)
            error = f"fallback to proxy: {exc}"
            self.trace.flags.append("localization_fallback")
        self.event(**ev, raw=reply, parsed=[c.__dict__ for c in cands], error=error, t_end=time.time())
        return cands

    def run_tools(self, calls: list[ToolCall], it: int) -> list:
        budget = self.config.tool_budget
        if self.tools_used + len(calls) > budget:
            self.trace.flags.append("tool_budget_exceeded")
            raise self.fail(ToolBudgetExceeded(
                f"{len(calls)} calls requested with {budget - self.tools_used} of {budget} left"))
        entries = []
        for call in calls:
            t0 = time.time()
            self.tools_used += 1
            try:
                res = dispatch(call, self.ctx)
            except (TSAgentError, ValueError) as exc:
                err = f"{type(exc).__name__}: {exc}"
                self.event(stage="tool", iteration=it, role=None, parsed=call.to_dict(), error=err, t_start=t0, t_end=time.time())
                entries.append((call, err))
                continue
            self.event(stage="tool", iteration=it, parsed=res.to_dict(), t_start=t0, t_end=time.time())
            entries.append(res)
        return entries

    def run(self) -> list[AnomalyVerdict]:
        cfg, w = self.config, self.window
        cands = self.localize()
        if not cands:
            self.trace.flags.append("short_circuit")
            self.trace.iterations = 1
            self.trace.final_verdicts = []
            return []
        values = render_values(w)
        knowledge = render_records(cfg.knowledge.records)
        tools = describe_tools()
        feedback = "none"
        evidence: list = []
        verdicts: list[AnomalyVerdict] = []
        last = cfg.max_refinements + 1
        for it in range(1, last + 1):
            self.trace.iterations = it
            plan = self.ask("locator", {
                "Vision anomaly intervals": render_candidates(cands, w),
                "Time Series Values": values,
                "Available Tools": tools,
                "Domain Knowledge": knowledge,
                "Reviewer Feedback": feedback,
            }, it)
            calls = self.ask("actor", {
                "Plan": plan.plan,
                "range": f"[{w.start}, {w.end - 1}]",
                "Time Series Values": values,
                "Available Tools": tools,
            }, it)
            evidence += self.run_tools(calls, it)
            raw_verdicts = self.ask("detector", {
                "Plan": plan.plan,
                "Used_Tool_Description": render_tool_results(evidence),
                "Time Series Values": values,
                "Domain Knowledge": knowledge,
            }, it)
            verdicts = clip_to_window(raw_verdicts, w)
            report = self.ask("evaluator", {
                "Plan": plan.plan,
                "Detector Result": serialize_verdicts(verdicts),
                "Iteration": f"{it} of {last}",
            }, it)
            if not report.needs_refinement:
                break
            if it == last:
                self.trace.flags.append("refinement_exhausted")
                break
            notes = [f"issue: {s}" for s in report.issues] + [f"suggestion: {s}" for s in report.suggestions]
            feedback = "\n".join(notes) if notes else "The reviewer asked for another round."
        final = merge_verdicts(verdicts)
        self.trace.final_verdicts = [v.to_dict() for v in final]
        return final


def _jsonable(parsed):
    if isinstance(parsed, list):
        return [_jsonable(p) for p in parsed]
    if hasattr(parsed, "to_dict"):
        return parsed.to_dict()
    return parsed


def _resolve_backends(config: WorkflowConfig) -> dict:
    roles = ROLES + (("localizer",) if config.localization == "backend" else ())
    return {r: config.backend(r) for r in roles}


def run_episode(window: Window, config: Optional[WorkflowConfig] = None, backends: Optional[dict] = None):
    """Run one episode over ``window``; returns ``(verdicts, trace)``.

    Failures raise an ``EpisodeError`` whose ``trace`` holds every event so far.
    """
    config = config or WorkflowConfig()
    ep = _Episode(window, config, backends or _resolve_backends(config))
    verdicts = ep.run()
    return verdicts, ep.trace


# -- replay ------------------------------------------------------------------


class _TraceBackend:
    """Feeds recorded raw replies back in order, refusing requests whose digest differs."""

    def __init__(self, role: str, events: list[TraceEvent]):
        self.role = role
        self.queue = deque(events)
        self.temperature = events[0].temperature if events else None
        self.model = events[0].model if events else None

    def digest(self, messages):
        ev = self.queue[0] if self.queue else None
        t = ev.temperature if ev else self.temperature
        m = ev.model if ev else self.model
        return request_digest(messages, t, m)

    def complete(self, messages) -> str:
        if not self.queue:
            raise TraceCorrupt(-1, f"trace has no further {self.role} reply")
        ev = self.queue.popleft()
        if request_digest(messages, ev.temperature, ev.model) != ev.digest:
            raise TraceCorrupt(ev.seq, f"{self.role} request does not match the recorded digest")
        if ev.raw is None:
            raise TraceCorrupt(ev.seq, f"{self.role} event has no recorded reply")
        return ev.raw


def _config_from_snapshot(snap: dict) -> WorkflowConfig:
    store = KnowledgeStore(KnowledgeRecord(**r) for r in snap["knowledge"])
    localizer = {"localizer": HeuristicBackend()} if snap["localization"] == "backend" else {}
    return WorkflowConfig(
        max_refinements=snap["max_refinements"],
        tool_budget=snap["tool_budget"],
        localization=snap["localization"],
        max_candidates=snap["max_candidates"],
        knowledge=store,
        backends=localizer,
    )


def replay_episode(trace: EpisodeTrace) -> list[AnomalyVerdict]:
    """Re-run the episode with recorded replies in place of live backends.

    Parsing, tool execution and control flow are all re-executed; a request that
    does not match its recorded digest, or an unused recorded reply, raises TraceCorrupt.
    """
    if not trace.events:
        raise TraceCorrupt(0, "trace has no events")
    for i, ev in enumerate(trace.events):
        if ev.seq != i:
            raise TraceCorrupt(i, "events out of order")
    try:
        config = _config_from_snapshot(trace.config)
        window = trace.get_window()
    except (KeyError, TypeError, ValueError) as exc:
        raise TraceCorrupt(0, f"bad header: {exc}") from None
    by_role = defaultdict(list)
    for ev in trace.events:
        if ev.role is not None and ev.digest is not None:
            by_role[ev.role].append(ev)
    backends = {r: _TraceBackend(r, by_role.get(r, [])) for r in ROLES + ("localizer",)}
    if config.localization != "backend":
        del backends["localizer"]
    ep = _Episode(window, config, backends)
    verdicts = ep.run()
    left = [ev for b in backends.values() for ev in b.queue]
    if left:
        raise TraceCorrupt(min(ev.seq for ev in left), "recorded replies left unused")
    return verdicts


def replay_matches(trace: EpisodeTrace) -> bool:
    return [v.to_dict() for v in replay_episode(trace)] == (trace.final_verdicts or [])


# -- dataset -----------------------------------------------------------------


class DatasetRun(NamedTuple):
    labels: np.ndarray
    verdicts: list
    traces: list
    failures: list  # (window start, error)


def run_dataset(series: TimeSeries, config: Optional[WorkflowConfig] = None, workers: int = 1) -> DatasetRun:
    """Preprocess, segment, run one episode per window and union the verdicts into point labels.

    A failed window is recorded in ``failures`` (its partial trace is kept) and does not stop the rest.
    """
    from .metrics import verdicts_to_labels

    config = config or WorkflowConfig()
    prepared = preprocess(series, detrend_first=config.detrend)
    windows = segment_windows(prepared, config.window_length, config.window_step)
    backends = _resolve_backends(config)

    def one(w: Window):
        try:
            v, tr = run_episode(w, config, backends)
            return v, tr, None
        except EpisodeError as exc:
            log.warning("episode at %d failed: %s", w.start, exc)
            return [], exc.trace, exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, windows))
    else:
        results = [one(w) for w in windows]

    verdicts, traces, failures = [], [], []
    for w, (v, tr, err) in zip(windows, results):
        verdicts.extend(v)
        if tr is not None:
            traces.append(tr)
        if err is not None:
            failures.append((w.start, err))
    labels = verdicts_to_labels(verdicts, len(series))
    return DatasetRun(labels, verdicts, traces, failures)
