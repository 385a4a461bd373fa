import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tsagent import errors
from tsagent.backends import (
    API_KEY_ENV,
    BackendConfig,
    CallableBackend,
    HeuristicBackend,
    RecordingBackend,
    RemoteBackend,
    ReplayBackend,
    make_backend,
    request_digest,
)
from tsagent.protocol import (
    PARSERS,
    ROLES,
    AnomalyVerdict,
    ChatTurn,
    harvest_thresholds,
    load_template,
    parse_actor_calls,
    parse_detector_verdicts,
    parse_evaluator_report,
    parse_locator_plan,
    placeholders,
    render_prompt,
    serialize_verdicts,
    substitute,
)

from conftest import DATA

MALFORMED = json.loads((DATA / "malformed_replies.json").read_text())

verdicts = st.builds(
    lambda s, w, t, e, c: AnomalyVerdict(s, s + w, t, e, c),
    st.integers(0, 10_000),
    st.integers(0, 100),
    st.sampled_from(["point_global", "pattern_trend", "odd type"]),
    st.text(max_size=40),
    st.sampled_from([1, 2, 3]),
)


@given(st.lists(verdicts, max_size=8))
def test_verdict_round_trip(vs):
    assert parse_detector_verdicts(serialize_verdicts(vs)) == vs
    assert parse_detector_verdicts(f"<think>ok</think>\n```json\n{serialize_verdicts(vs)}\n```") == vs


@given(st.integers().filter(lambda c: c not in (1, 2, 3)))
def test_detector_never_accepts_bad_confidence(c):
    reply = json.dumps([{"interval": [1, 2], "type": "point_global", "explanation": "e", "confidence": c}])
    with pytest.raises(errors.ConfidenceOutOfRange):
        parse_detector_verdicts(reply)


def test_empty_array_is_a_verdict():
    assert parse_detector_verdicts("[]") == []
    assert parse_detector_verdicts("<think>nothing stands out</think>\n```json\n[]\n```") == []


@pytest.mark.parametrize("case", MALFORMED, ids=[f"{c['role']}-{i}" for i, c in enumerate(MALFORMED)])
def test_malformed_fixture(case):
    with pytest.raises(getattr(errors, case["error"])):
        PARSERS[case["role"]](case["reply"])


def test_evaluator_accepts_valid_report():
    r = parse_evaluator_report('prefix {"issues": ["a"], "suggestions": [], "needs_refinement": true, '
                               '"quality_metrics": {"planning": "poor", "tool_usage": "acceptable", "reasoning": "good"}}')
    assert r.needs_refinement and r.issues == ("a",) and r.quality_metrics["planning"] == "poor"


def test_locator_plan_and_thresholds():
    reply = ("<think>spike?</think><Plan>use diff_zscore >= 2.5 and local_structure threshold 4\n"
             "- diff_zscore(scope=global, threshold=3.5)</Plan>")
    plan = parse_locator_plan(reply)
    assert plan.think == "spike?"
    assert plan.declared_thresholds == {"diff_zscore": 3.5, "local_structure": 4.0}
    assert harvest_thresholds("stat_features threshold: 1e-2") == {"stat_features": 0.01}


def test_actor_calls_fenced_and_structured():
    calls = parse_actor_calls('```json\n[{"tool": "stat_features", "params": {}}, {"tool": "diff_zscore"}]\n```')
    assert [c.tool for c in calls] == ["stat_features", "diff_zscore"]
    native = [{"function": {"name": "local_structure", "arguments": '{"start": 3, "end": 9}'}}]
    assert parse_actor_calls("", structured=native)[0].params == {"start": 3, "end": 9}


def test_templates_have_role_line_and_fill():
    for role in ROLES:
        t = load_template(role)
        assert t.startswith(f"ROLE: {role}")
        names = placeholders(t)
        text = render_prompt(role, {n: f"<{n}>" for n in names})
        assert all(f"<{n}>" in text for n in names)
        with pytest.raises(errors.MissingPlaceholder):
            render_prompt(role, {})


def test_substitute_escapes():
    assert substitute("{{a}} {b}", {"b": 1}) == "{a} 1"


def test_chat_turn_validation():
    with pytest.raises(ValueError):
        ChatTurn("robot", "x")
    with pytest.raises(ValueError):
        ChatTurn("user", "")


# -- backends ----------------------------------------------------------------

MSGS = [ChatTurn("system", "ROLE: evaluator\nhello"), ChatTurn("user", "go")]


def test_digest_depends_on_temperature_and_content():
    a = request_digest(MSGS, 0.7, "m")
    assert a == request_digest(list(MSGS), 0.7, "m")
    assert a != request_digest(MSGS, 0.2, "m")
    assert a != request_digest(MSGS[:1], 0.7, "m")


def test_replay_hit_miss_and_order(tmp_path):
    d = request_digest(MSGS, 0.7, None)
    b = ReplayBackend([{"digest": d, "reply": "one"}, {"digest": d, "reply": "two"}])
    assert b.complete(MSGS) == "one" and b.complete(MSGS) == "two"
    with pytest.raises(errors.ReplayMiss):
        b.complete(MSGS)


def test_record_then_replay(tmp_path):
    path = tmp_path / "fx.jsonl"
    rec = RecordingBackend(CallableBackend(lambda m: "reply!", model=None), path)
    assert rec.complete(MSGS) == "reply!"
    again = make_backend(BackendConfig("replay", replay_path=str(path)))
    assert again.complete(MSGS) == "reply!"


def test_replay_is_thread_safe():
    d = request_digest(MSGS, 0.7, None)
    b = ReplayBackend([{"digest": d, "reply": str(i)} for i in range(200)])
    got = []

    def work():
        for _ in range(50):
            got.append(b.complete(MSGS))

    ts = [threading.Thread(target=work) for _ in range(4)]
    [t.start() for t in ts]
    [t.join() for t in ts]
    assert sorted(got, key=int) == [str(i) for i in range(200)]


def test_heuristic_deterministic():
    h = HeuristicBackend()
    assert h.complete(MSGS) == h.complete(MSGS)


def test_backend_config_validation():
    with pytest.raises(errors.ConfigError):
        BackendConfig("carrier-pigeon")
    with pytest.raises(errors.ConfigError):
        BackendConfig("remote")
    with pytest.raises(errors.ConfigError):
        BackendConfig("heuristic", temperature=5)
    with pytest.raises(errors.BackendUnavailable):
        make_backend(BackendConfig("replay", replay_path="/nonexistent.jsonl"))


def test_remote_needs_key(monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    with pytest.raises(errors.BackendUnavailable):
        make_backend(BackendConfig("remote", endpoint="http://x/v1/chat/completions", model="m"))


def _remote(monkeypatch, handler):
    monkeypatch.setenv(API_KEY_ENV, "sekrit")
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return RemoteBackend(BackendConfig("remote", endpoint="http://svc/v1/chat/completions", model="m", temperature=0.3), client)


def test_remote_wire_format(monkeypatch):
    seen = {}

    def handler(req):
        seen["auth"] = req.headers["authorization"]
        seen["body"] = json.loads(req.content)
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": "hi"}}]})

    assert _remote(monkeypatch, handler).complete(MSGS) == "hi"
    assert seen["auth"] == "Bearer sekrit"
    assert seen["body"] == {"model": "m", "temperature": 0.3, "messages": [m.to_dict() for m in MSGS]}


def test_remote_errors(monkeypatch):
    with pytest.raises(errors.HttpError) as exc:
        _remote(monkeypatch, lambda r: httpx.Response(503, text="busy")).complete(MSGS)
    assert exc.value.status == 503

    def slow(req):
        raise httpx.ReadTimeout("slow", request=req)

    with pytest.raises(errors.BackendTimeout):
        _remote(monkeypatch, slow).complete(MSGS)
    with pytest.raises(errors.HttpError):
        _remote(monkeypatch, lambda r: httpx.Response(200, json={"nope": 1})).complete(MSGS)
