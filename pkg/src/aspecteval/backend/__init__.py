"""Model backends: wire client, deterministic mock, and fixture replay."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errors import UsageError
from .base import (
    CHOICE_PROB_PATH,
    EMBED_PATH,
    YES_NO,
    Backend,
    ChoiceProbRequest,
    ChoiceProbResponse,
    request_hash,
)
from .mock import EMBED_DIM, MockBackend, hashed_bag_of_tokens
from .replay import CountingBackend, RecordingBackend, ReplayBackend, load_fixtures
from .wire import RetryPolicy, WireBackend

BACKEND_KINDS = ("mock", "replay", "wire")


@dataclass(frozen=True)
class BackendSpec:
    kind: str = "mock"
    seed: int = 0
    fixtures: str | None = None
    strict: bool = True
    endpoint: str | None = None
    token_env: str | None = None
    timeout: float = 30.0
    retries: int = 3
    max_in_flight: int = 8


def make_backend(spec: BackendSpec) -> Backend:
    if spec.kind == "mock":
        return MockBackend(spec.seed)
    if spec.kind == "replay":
        if not spec.fixtures:
            raise UsageError("replay backend needs a fixtures file")
        if not Path(spec.fixtures).exists():
            raise UsageError(f"fixtures file not found: {spec.fixtures}")
        return ReplayBackend(spec.fixtures, strict=spec.strict, fallback=MockBackend(spec.seed))
    if spec.kind == "wire":
        if not spec.endpoint:
            raise UsageError("wire backend needs an endpoint URL")
        return WireBackend(
            spec.endpoint,
            token_env=spec.token_env,
            timeout=spec.timeout,
            retry=RetryPolicy(attempts=spec.retries),
            max_in_flight=spec.max_in_flight,
        )
    raise UsageError(f"unknown backend kind {spec.kind!r}; expected one of {BACKEND_KINDS}")


def choice_prob(backend: Backend, request: ChoiceProbRequest) -> ChoiceProbResponse:
    return backend.choice_prob(request)


def embed(backend: Backend, texts: list[str]) -> list[list[float]]:
    return backend.embed(texts)


__all__ = [
    "BACKEND_KINDS",
    "CHOICE_PROB_PATH",
    "EMBED_DIM",
    "EMBED_PATH",
    "YES_NO",
    "Backend",
    "BackendSpec",
    "ChoiceProbRequest",
    "ChoiceProbResponse",
    "CountingBackend",
    "MockBackend",
    "RecordingBackend",
    "ReplayBackend",
    "RetryPolicy",
    "WireBackend",
    "choice_prob",
    "embed",
    "hashed_bag_of_tokens",
    "load_fixtures",
    "make_backend",
    "request_hash",
]
