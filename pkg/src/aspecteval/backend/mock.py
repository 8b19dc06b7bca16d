"""Deterministic in-process backend for tests and offline runs."""

from __future__ import annotations

import hashlib
import re
from collections.abc import Sequence

from .base import ChoiceProbRequest, ChoiceProbResponse

EMBED_DIM = 64
_TOKEN = re.compile(r"\w+", re.UNICODE)


def hashed_bag_of_tokens(text: str, dim: int = EMBED_DIM) -> list[float]:
    """Signed feature hashing of the lower-cased token multiset."""
    vec = [0.0] * dim
    for tok in _TOKEN.findall(text.lower()):
        h = hashlib.sha256(tok.encode("utf-8")).digest()
        idx = int.from_bytes(h[:4], "big") % dim
        vec[idx] += 1.0 if h[4] & 1 else -1.0
    return vec


class MockBackend:
    """Probabilities come from a keyed hash of (seed, input, choice).

    Identical inputs always produce identical outputs; different seeds
    give unrelated outputs. Embeddings ignore the seed so that aspect
    selection does not depend on it.
    """

    def __init__(self, seed: int = 0, dim: int = EMBED_DIM):
        self.seed = int(seed)
        self.dim = dim
        self.provider_id = f"mock-hash-{dim}"
        self._key = self.seed.to_bytes(8, "big", signed=True)

    def _unit(self, text: str, choice: str) -> float:
        h = hashlib.blake2b(f"{text}\x1f{choice}".encode("utf-8"), key=self._key, digest_size=8).digest()
        return (int.from_bytes(h, "big") + 1) / 2.0**64

    def choice_prob(self, request: ChoiceProbRequest) -> ChoiceProbResponse:
        return ChoiceProbResponse(tuple(self._unit(request.input_text, c) for c in request.choices))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        return [hashed_bag_of_tokens(t, self.dim) for t in texts]

    def __repr__(self) -> str:
        return f"MockBackend(seed={self.seed})"
