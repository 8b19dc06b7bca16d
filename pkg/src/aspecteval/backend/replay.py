"""Fixture capture and replay.

A fixture file holds one JSON object per line::

    {"hash": ..., "path": "/v1/choice_prob", "request": {...}, "response": {...}}

where ``hash`` is the SHA-256 of the canonical ``{"path", "body"}`` pair.
"""

from __future__ import annotations

import threading
from collections.abc import Sequence
from pathlib import Path

from ..errors import DataError, FixtureMissError
from ..jsonl import iter_jsonl, write_jsonl
from .base import (
    CHOICE_PROB_PATH,
    EMBED_PATH,
    Backend,
    ChoiceProbRequest,
    ChoiceProbResponse,
    parse_embed_reply,
    request_hash,
)
from .mock import MockBackend


def load_fixtures(path: str | Path) -> dict[str, dict]:
    entries: dict[str, dict] = {}
    for lineno, rec in iter_jsonl(path):
        for key in ("path", "request", "response"):
            if key not in rec:
                raise DataError(f"{path}:{lineno}: fixture entry missing {key!r}")
        h = request_hash(rec["path"], rec["request"])
        if rec.get("hash", h) != h:
            raise DataError(f"{path}:{lineno}: stored hash does not match request body")
        entries[h] = rec
    return entries


class ReplayBackend:
    """Answers from recorded fixtures.

    In strict mode any request absent from the fixtures raises
    :class:`FixtureMissError`; otherwise misses go to ``fallback``.
    """

    def __init__(
        self,
        fixtures: str | Path | dict[str, dict],
        strict: bool = True,
        fallback: Backend | None = None,
        provider_id: str = "replay",
    ):
        self.entries = fixtures if isinstance(fixtures, dict) else load_fixtures(fixtures)
        self.strict = strict
        self.fallback = fallback or MockBackend(0)
        self.provider_id = provider_id

    def _lookup(self, path: str, body: dict) -> dict | None:
        rec = self.entries.get(request_hash(path, body))
        if rec is None and self.strict:
            preview = str(body)[:120]
            raise FixtureMissError(f"fixture miss for {path}: {preview}")
        return rec

    def choice_prob(self, request: ChoiceProbRequest) -> ChoiceProbResponse:
        rec = self._lookup(CHOICE_PROB_PATH, request.body())
        if rec is None:
            return self.fallback.choice_prob(request)
        return ChoiceProbResponse.from_body(rec["response"], len(request.choices))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = {"texts": list(texts)}
        rec = self._lookup(EMBED_PATH, body)
        if rec is None:
            return self.fallback.embed(texts)
        return parse_embed_reply(rec["response"], len(texts))


class RecordingBackend:
    """Wraps a backend and records every distinct request/response pair."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.provider_id = inner.provider_id
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()

    def _record(self, path: str, request: dict, response: dict) -> None:
        h = request_hash(path, request)
        with self._lock:
            self._entries.setdefault(h, {"hash": h, "path": path, "request": request, "response": response})

    def choice_prob(self, request: ChoiceProbRequest) -> ChoiceProbResponse:
        resp = self.inner.choice_prob(request)
        self._record(CHOICE_PROB_PATH, request.body(), resp.body())
        return resp

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        vecs = self.inner.embed(texts)
        self._record(EMBED_PATH, {"texts": list(texts)}, {"embeddings": vecs})
        return vecs

    @property
    def entries(self) -> dict[str, dict]:
        with self._lock:
            return dict(self._entries)

    def save(self, path: str | Path) -> int:
        """Write fixtures sorted by hash so the file is independent of call order."""
        with self._lock:
            rows = [self._entries[h] for h in sorted(self._entries)]
        return write_jsonl(path, rows)


class CountingBackend:
    """Counts calls per kind; handy for asserting which queries were issued."""

    def __init__(self, inner: Backend):
        self.inner = inner
        self.provider_id = inner.provider_id
        self.prompts: list[str] = []
        self.embed_calls = 0
        self._lock = threading.Lock()

    def choice_prob(self, request: ChoiceProbRequest) -> ChoiceProbResponse:
        with self._lock:
            self.prompts.append(request.input_text)
        return self.inner.choice_prob(request)

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        with self._lock:
            self.embed_calls += 1
        return self.inner.embed(texts)

