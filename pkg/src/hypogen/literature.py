"""Pluggable literature sources.

Live web search is out of scope; the default source is a fixture corpus on
disk (a directory of documents plus a JSON index mapping doc_id to path and
title), which gives deterministic retrieval for tests and desk runs. The
same class doubles as a scientist-provided private repository.
"""

from __future__ import annotations

import json
import re
from enum import Enum
from pathlib import Path
from typing import Optional, Protocol

from pydantic import BaseModel, ConfigDict

from .errors import SourceUnavailable

SNIPPET_CHARS = 240


class LiteratureSourceKind(str, Enum):
    WEB_LIKE = "web_like"
    PRIVATE_REPOSITORY = "private_repository"
    FIXTURE = "fixture"


class LiteratureHit(BaseModel):
    model_config = ConfigDict(frozen=True)

    doc_id: str
    title: str
    snippet: str
    source: LiteratureSourceKind


class LiteratureSource(Protocol):
    def search(self, query: str, limit: int = 5) -> list[LiteratureHit]: ...

    def fetch(self, doc_id: str) -> str: ...


def _tokens(text: str) -> set[str]:
    return set(re.findall(r"[a-z0-9]+", text.lower()))


class FixtureCorpus:
    """Deterministic corpus: ranks by token overlap, ties by doc_id."""

    def __init__(
        self,
        root: str | Path,
        kind: LiteratureSourceKind = LiteratureSourceKind.FIXTURE,
        index_name: str = "index.json",
    ) -> None:
        self.root = Path(root)
        self.kind = kind
        index_path = self.root / index_name
        if not index_path.is_file():
            raise SourceUnavailable(f"no corpus index at {index_path}")
        self._index: dict[str, dict[str, str]] = json.loads(index_path.read_text())

    def __len__(self) -> int:
        return len(self._index)

    def fetch(self, doc_id: str) -> str:
        entry = self._index.get(doc_id)
        if entry is None:
            raise SourceUnavailable(f"unknown doc_id {doc_id!r}")
        path = self.root / entry["path"]
        if not path.is_file():
            raise SourceUnavailable(f"missing document file {path}")
        return path.read_text()

    def search(self, query: str, limit: int = 5) -> list[LiteratureHit]:
        if not query.strip():
            raise ValueError("query must be non-empty")
        query_tokens = _tokens(query)
        scored: list[tuple[float, str]] = []
        for doc_id, entry in self._index.items():
            text = self.fetch(doc_id)
            doc_tokens = _tokens(entry.get("title", "") + " " + text)
            if not doc_tokens:
                continue
            overlap = len(query_tokens & doc_tokens)
            if overlap == 0:
                continue
            scored.append((overlap / max(1, len(query_tokens)), doc_id))
        scored.sort(key=lambda pair: (-pair[0], pair[1]))
        hits = []
        for _score, doc_id in scored[:limit]:
            entry = self._index[doc_id]
            text = self.fetch(doc_id)
            hits.append(
                LiteratureHit(
                    doc_id=doc_id,
                    title=entry.get("title", doc_id),
                    snippet=text[:SNIPPET_CHARS],
                    source=self.kind,
                )
            )
        return hits


class EmptySource:
    """A configured but empty repository: every search returns nothing."""

    def __init__(self, kind: LiteratureSourceKind = LiteratureSourceKind.PRIVATE_REPOSITORY) -> None:
        self.kind = kind

    def search(self, query: str, limit: int = 5) -> list[LiteratureHit]:
        if not query.strip():
            raise ValueError("query must be non-empty")
        return []

    def fetch(self, doc_id: str) -> str:
        raise SourceUnavailable(f"unknown doc_id {doc_id!r}")


def search_literature(
    source: Optional[LiteratureSource], query: str, limit: int = 5
) -> list[LiteratureHit]:
    """Search the configured source; None means no source is configured."""
    if source is None:
        raise SourceUnavailable("no literature source configured")
    return source.search(query, limit=limit)
