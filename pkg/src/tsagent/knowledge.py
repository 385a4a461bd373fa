"""Knowledge memory: anomaly-type explanations, domain notes and tool semantics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Optional

KINDS = ("anomaly_type", "domain", "tool_semantics")


@dataclass(frozen=True)
class KnowledgeRecord:
    id: str
    kind: str
    tags: tuple[str, ...]
    body: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown record kind {self.kind!r}")
        object.__setattr__(self, "tags", tuple(self.tags))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tags"] = list(self.tags)
        return d


class KnowledgeStore:
    """Immutable, id-ordered collection of records."""

    def __init__(self, records: Iterable[KnowledgeRecord]):
        recs = sorted(records, key=lambda r: r.id)
        ids = [r.id for r in recs]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise ValueError(f"duplicate record ids: {dupes}")
        self._records = tuple(recs)

    @classmethod
    def from_json(cls, path) -> "KnowledgeStore":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(KnowledgeRecord(**r) for r in raw)

    @classmethod
    def default(cls) -> "KnowledgeStore":
        text = resources.files("tsagent").joinpath("data/knowledge.json").read_text(encoding="utf-8")
        return cls(KnowledgeRecord(**r) for r in json.loads(text))

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps([r.to_dict() for r in self._records], indent=2))

    @property
    def records(self) -> tuple[KnowledgeRecord, ...]:
        return self._records

    def __len__(self) -> int:
        return len(self._records)

    def query(self, tags: Iterable[str] = (), kind: Optional[str] = None) -> list[KnowledgeRecord]:
        """Records carrying every tag in ``tags`` (and of ``kind`` if given), ordered by id."""
        wanted = set(tags)
        if kind is not None and kind not in KINDS:
            raise ValueError(f"unknown record kind {kind!r}")
        return [
            r
            for r in self._records
            if wanted.issubset(r.tags) and (kind is None or r.kind == kind)
        ]

    def taxonomy(self) -> frozenset[str]:
        """Anomaly type names; the first tag of an anomaly_type record is its canonical name."""
        return frozenset(r.tags[0] for r in self._records if r.kind == "anomaly_type" and r.tags)


def render_records(records: Iterable[KnowledgeRecord]) -> str:
    lines = [f"- [{r.kind}] {r.id}: {r.body}" for r in records]
    return "\n".join(lines) if lines else "(no records)"
