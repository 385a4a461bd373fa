"""Chat backends: remote chat-completions service, deterministic heuristic policy, record/replay."""

from __future__ import annotations

import hashlib
import json
import os
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Protocol, Sequence, Union

from .errors import BackendTimeout, BackendUnavailable, ConfigError, HttpError, ReplayMiss
from .protocol import ChatTurn

API_KEY_ENV = "ANOMAMIND_API_KEY"
DEFAULT_TEMPERATURE = 0.7


@dataclass(frozen=True)
class BackendConfig:
    kind: str = "heuristic"
    endpoint: Optional[str] = None
    model: Optional[str] = None
    temperature: float = DEFAULT_TEMPERATURE
    timeout: float = 60.0
    replay_path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("remote", "heuristic", "replay"):
            raise ConfigError(f"unknown backend kind {self.kind!r}")
        if not 0 <= self.temperature <= 2:
            raise ConfigError("temperature must lie in [0, 2]")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise ConfigError("remote backends need an endpoint and a model")
        if self.kind == "replay" and not self.replay_path:
            raise ConfigError("replay backends need a replay_path")

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def request_digest(messages: Sequence[ChatTurn], temperature: float, model: Optional[str] = None) -> str:
    blob = json.dumps(
        {
            "messages": [[m.role, m.content] for m in messages],
            "temperature": temperature,
            "model": model,
        },
        sort_keys=True,
        ensure_ascii=False,
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class Backend(Protocol):
    temperature: float
    model: Optional[str]

    def complete(self, messages: Sequence[ChatTurn]) -> str: ...


class _Base:
    temperature: float = DEFAULT_TEMPERATURE
    model: Optional[str] = None

    def digest(self, messages: Sequence[ChatTurn]) -> str:
        return request_digest(messages, self.temperature, self.model)


class HeuristicBackend(_Base):
    """Rule-based stand-in for the language models; same messages, same reply."""

    model = "heuristic"

    def __init__(self, temperature: float = DEFAULT_TEMPERATURE):
        self.temperature = temperature

    def complete(self, messages: Sequence[ChatTurn]) -> str:
        from .heuristic import respond

        return respond(messages)


class CallableBackend(_Base):
    """Wraps ``fn(messages) -> str``; handy for scripted fixtures."""

    def __init__(self, fn: Callable[[Sequence[ChatTurn]], str], temperature: float = DEFAULT_TEMPERATURE, model: str = "scripted"):
        self.fn = fn
        self.temperature = temperature
        self.model = model

    def complete(self, messages: Sequence[ChatTurn]) -> str:
        return self.fn(messages)


class RemoteBackend(_Base):
    """One POST per completion in the common chat-completions JSON shape."""

    def __init__(self, config: BackendConfig, client=None):
        key = os.environ.get(API_KEY_ENV)
        if not key:
            raise BackendUnavailable(f"{API_KEY_ENV} is not set")
        self.config = config
        self.temperature = config.temperature
        self.model = config.model
        self._key = key
        self._client = client

    def complete(self, messages: Sequence[ChatTurn]) -> str:
        import httpx

        body = {
            "model": self.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": self.temperature,
        }
        headers = {"Authorization": f"Bearer {self._key}"}
        client = self._client or httpx.Client(timeout=self.config.timeout)
        try:
            resp = client.post(self.config.endpoint, json=body, headers=headers)
        except httpx.TimeoutException as exc:
            raise BackendTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise BackendUnavailable(str(exc)) from exc
        finally:
            if self._client is None:
                client.close()
        if resp.status_code >= 400:
            raise HttpError(resp.status_code, resp.text)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise HttpError(resp.status_code, f"unexpected response body: {resp.text}") from exc


def load_fixture(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows


class ReplayBackend(_Base):
    """Serves recorded replies by request digest; repeated digests are served in recorded order."""

    def __init__(self, records, temperature: float = DEFAULT_TEMPERATURE, model: Optional[str] = None):
        if isinstance(records, (str, Path)):
            records = load_fixture(records)
        self.temperature = temperature
        self.model = model
        self._queues: dict[str, deque] = defaultdict(deque)
        for r in records:
            self._queues[r["digest"]].append(r["reply"])
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[ChatTurn]) -> str:
        d = self.digest(messages)
        with self._lock:
            q = self._queues.get(d)
            if not q:
                raise ReplayMiss(d)
            return q.popleft()


class RecordingBackend(_Base):
    """Passes through to ``inner`` and appends ``{digest, reply}`` lines to a JSONL fixture."""

    def __init__(self, inner, path):
        self.inner = inner
        self.temperature = inner.temperature
        self.model = inner.model
        self.path = Path(path)
        self._lock = threading.Lock()

    def complete(self, messages: Sequence[ChatTurn]) -> str:
        reply = self.inner.complete(messages)
        row = json.dumps({"digest": self.digest(messages), "reply": reply}, ensure_ascii=False)
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(row + "\n")
        return reply


def make_backend(config: Union[BackendConfig, "Backend"]):
    if not isinstance(config, BackendConfig):
        return config
    if config.kind == "heuristic":
        return HeuristicBackend(config.temperature)
    if config.kind == "replay":
        path = Path(config.replay_path)
        if not path.is_file():
            raise BackendUnavailable(f"replay fixture {path} not found")
        return ReplayBackend(path, config.temperature, config.model)
    return RemoteBackend(config)


def complete(backend, messages: Sequence[ChatTurn]) -> str:
    return make_backend(backend).complete(messages)


def digest_for(backend, messages: Sequence[ChatTurn]) -> str:
    fn = getattr(backend, "digest", None)
    if fn is not None:
        return fn(messages)
    return request_digest(messages, getattr(backend, "temperature", DEFAULT_TEMPERATURE), getattr(backend, "model", None))
