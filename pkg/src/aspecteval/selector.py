"""Auxiliary-aspect selection by definition-embedding similarity."""

from __future__ import annotations

import hashlib
import random
import threading
from collections.abc import Mapping, Sequence
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Protocol

from . import kernels
from .backend.mock import EMBED_DIM, hashed_bag_of_tokens
from .domain import Aspect
from .errors import BackendError, DataError
from .jsonl import iter_jsonl, write_jsonl


# Similarities are compared after rounding to this many decimals, so values
# that are mathematically equal but differ in the last bit still count as a
# tie and fall through to the id tie-break.
SIMILARITY_DECIMALS = 12


def similarity_key(similarity: float, aspect_id: str) -> tuple[float, str]:
    """Sort key: higher similarity first, then ascending aspect id."""
    return -round(similarity, SIMILARITY_DECIMALS), aspect_id


class PoolMode(str, Enum):
    ALL = "all"
    SEEN = "seen"
    UNSEEN = "unseen"
    RANDOM = "random"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class AspectEmbedding:
    aspect_id: str
    vector: tuple[float, ...]
    provider_id: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "vector", tuple(float(v) for v in self.vector))
        if not any(self.vector):
            raise DataError(f"embedding for {self.aspect_id!r} has zero norm")


class EmbeddingProvider(Protocol):
    provider_id: str

    def embed(self, texts: Sequence[str]) -> list[list[float]]: ...


class HashEmbeddingProvider:
    """Local, dependency-free provider: signed feature hashing of tokens."""

    def __init__(self, dim: int = EMBED_DIM):
        self.dim = dim
        self.provider_id = f"mock-hash-{dim}"

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [hashed_bag_of_tokens(t, self.dim) for t in texts]


class FileEmbeddingProvider:
    """Serves precomputed vectors keyed by definition text.

    The file holds ``{aspect_id, provider_id, vector}`` records; ``aspects``
    maps those ids back to definitions.
    """

    def __init__(self, path: str | Path, aspects: Sequence[Aspect]):
        by_id = {a.id: a.definition for a in aspects}
        self._vectors: dict[str, list[float]] = {}
        providers = set()
        for lineno, rec in iter_jsonl(path):
            try:
                aid, vec = rec["aspect_id"], rec["vector"]
            except KeyError as exc:
                raise DataError(f"{path}:{lineno}: missing {exc.args[0]!r}") from exc
            providers.add(str(rec.get("provider_id", "file")))
            if aid in by_id:
                self._vectors[by_id[aid]] = [float(v) for v in vec]
        if len(providers) > 1:
            raise DataError(f"{path}: embeddings from several providers {sorted(providers)}")
        self.provider_id = providers.pop() if providers else "file"

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        try:
            return [list(self._vectors[t]) for t in texts]
        except KeyError as exc:
            raise BackendError(f"no precomputed embedding for definition {str(exc.args[0])[:60]!r}") from None


def save_embeddings(path: str | Path, embeddings: Sequence[AspectEmbedding]) -> int:
    return write_jsonl(
        path,
        ({"aspect_id": e.aspect_id, "provider_id": e.provider_id, "vector": list(e.vector)} for e in embeddings),
    )


class EmbeddingCache:
    """Cache keyed by (provider id, SHA-256 of the definition); safe across threads."""

    def __init__(self) -> None:
        self._data: dict[tuple[str, str], tuple[float, ...]] = {}
        self._lock = threading.Lock()

    @staticmethod
    def key(provider_id: str, definition: str) -> tuple[str, str]:
        return provider_id, hashlib.sha256(definition.encode("utf-8")).hexdigest()

    def get(self, provider_id: str, definition: str) -> tuple[float, ...] | None:
        with self._lock:
            return self._data.get(self.key(provider_id, definition))

    def put(self, provider_id: str, definition: str, vector: Sequence[float]) -> None:
        with self._lock:
            self._data.setdefault(self.key(provider_id, definition), tuple(vector))

    def __len__(self) -> int:
        with self._lock:
            return len(self._data)


def embed_definitions(
    aspects: Sequence[Aspect], provider: EmbeddingProvider, cache: EmbeddingCache | None = None
) -> list[AspectEmbedding]:
    """Embed aspect definitions, one vector per aspect in input order.

    Cache misses go to the provider in a single batch.
    """
    for a in aspects:
        if not a.definition.strip():
            raise DataError(f"aspect {a.id!r} has an empty definition")
    pid = provider.provider_id
    vectors: list[tuple[float, ...] | None] = [cache.get(pid, a.definition) if cache else None for a in aspects]
    missing: list[str] = []
    for a, v in zip(aspects, vectors):
        if v is None and a.definition not in missing:
            missing.append(a.definition)
    if missing:
        try:
            fresh = provider.embed(missing)
        except BackendError as exc:
            ids = [a.id for a in aspects if a.definition in missing]
            raise BackendError(f"embedding provider failed for {ids}: {exc}") from exc
        if len(fresh) != len(missing):
            raise BackendError(f"provider returned {len(fresh)} vectors for {len(missing)} definitions")
        if len({len(v) for v in fresh}) > 1:
            raise BackendError("embedding dimension differs within one batch")
        got = dict(zip(missing, fresh))
        if cache is not None:
            for d, v in got.items():
                cache.put(pid, d, v)
        vectors = [v if v is not None else tuple(got[a.definition]) for a, v in zip(aspects, vectors)]
    dims = {len(v) for v in vectors if v is not None}
    if len(dims) > 1:
        raise DataError(f"embedding dimensions disagree: {sorted(dims)}")
    return [AspectEmbedding(a.id, v, pid) for a, v in zip(aspects, vectors)]


def cosine_similarity(u: Sequence[float], v: Sequence[float]) -> float:
    try:
        return kernels.cosine(u, v)
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _embedding_vector(embeddings: Mapping[str, AspectEmbedding | Sequence[float]], aspect_id: str):
    try:
        e = embeddings[aspect_id]
    except KeyError:
        raise DataError(f"no embedding for aspect {aspect_id!r}") from None
    return e.vector if isinstance(e, AspectEmbedding) else e


def filter_pool(target: Aspect, pool: Sequence[Aspect], mode: PoolMode | str) -> list[Aspect]:
    mode = PoolMode(mode)
    out = [a for a in pool if a.id != target.id]
    if mode is PoolMode.SEEN:
        out = [a for a in out if a.seen]
    elif mode is PoolMode.UNSEEN:
        out = [a for a in out if not a.seen]
    return out


def rank_pool(
    target: Aspect,
    pool: Sequence[Aspect],
    embeddings: Mapping[str, AspectEmbedding | Sequence[float]],
) -> list[tuple[Aspect, float]]:
    """All pool aspects with their similarity, best first; ties by ascending id.

    Similarities that agree to ``SIMILARITY_DECIMALS`` places are ties.
    """
    tv = _embedding_vector(embeddings, target.id)
    scored = [(a, cosine_similarity(_embedding_vector(embeddings, a.id), tv)) for a in pool]
    scored.sort(key=lambda pair: similarity_key(pair[1], pair[0].id))
    return scored


def select_top_k(
    target: Aspect,
    pool: Sequence[Aspect],
    k: int,
    mode: PoolMode | str,
    embeddings: Mapping[str, AspectEmbedding | Sequence[float]],
    rng: random.Random | None = None,
) -> list[Aspect]:
    """Pick up to ``k`` auxiliary aspects for ``target``; the target itself is never returned."""
    if k < 1:
        raise DataError(f"k must be a positive integer, got {k}")
    mode = PoolMode(mode)
    candidates = filter_pool(target, pool, mode)
    if not candidates:
        raise DataError(f"empty {mode.value} pool for target {target.id!r}")
    if mode is PoolMode.RANDOM:
        if rng is None:
            raise DataError("random pool mode needs a seeded rng")
        ordered = sorted(candidates, key=lambda a: a.id)
        return rng.sample(ordered, min(k, len(ordered)))
    return [a for a, _ in rank_pool(target, candidates, embeddings)[:k]]
