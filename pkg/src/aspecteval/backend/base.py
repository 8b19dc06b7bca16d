"""Request/response types and the backend protocol."""

from __future__ import annotations

import hashlib
import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

from ..errors import BackendError, DataError
from ..jsonl import dumps

CHOICE_PROB_PATH = "/v1/choice_prob"
EMBED_PATH = "/v1/embed"
YES_NO = ("Yes", "No")


@dataclass(frozen=True)
class ChoiceProbRequest:
    input_text: str
    choices: tuple[str, ...] = YES_NO

    def __post_init__(self) -> None:
        object.__setattr__(self, "choices", tuple(self.choices))
        if not self.input_text:
            raise DataError("choice-probability request has empty input")
        if len(set(self.choices)) < 2 or len(set(self.choices)) != len(self.choices):
            raise DataError(f"need at least 2 distinct choices, got {self.choices!r}")

    def body(self) -> dict:
        return {"input": self.input_text, "choices": list(self.choices)}


@dataclass(frozen=True)
class ChoiceProbResponse:
    """Raw, possibly unnormalized, probabilities aligned with the request choices."""

    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if any(not math.isfinite(p) or p < 0.0 for p in probs):
            raise BackendError(f"probabilities must be finite and non-negative, got {probs!r}")
        if not any(p > 0.0 for p in probs):
            raise BackendError("backend returned all-zero probabilities")

    @classmethod
    def from_body(cls, body: object, n_choices: int) -> ChoiceProbResponse:
        if not isinstance(body, dict) or not isinstance(body.get("probs"), list):
            raise BackendError(f"malformed choice_prob reply: {body!r}")
        probs = body["probs"]
        if len(probs) != n_choices or not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in probs):
            raise BackendError(f"malformed choice_prob reply: expected {n_choices} numbers, got {probs!r}")
        return cls(tuple(probs))

    def body(self) -> dict:
        return {"probs": list(self.probs)}


def parse_embed_reply(body: object, n_texts: int) -> list[list[float]]:
    if not isinstance(body, dict) or not isinstance(body.get("embeddings"), list):
        raise BackendError(f"malformed embed reply: {body!r}")
    vecs = body["embeddings"]
    if len(vecs) != n_texts:
        raise BackendError(f"embed reply has {len(vecs)} vectors for {n_texts} texts")
    out = []
    for v in vecs:
        if not isinstance(v, list) or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise BackendError("malformed embedding vector in reply")
        out.append([float(x) for x in v])
    return out


def request_hash(path: str, body: dict) -> str:
    return hashlib.sha256(dumps({"path": path, "body": body}).encode("utf-8")).hexdigest()


@runtime_checkable
class Backend(Protocol):
    """Anything that can answer choice-probability and embedding queries."""

    provider_id: str

    def choice_prob(self, request: ChoiceProbRequest) -> ChoiceProbResponse: ...

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...
