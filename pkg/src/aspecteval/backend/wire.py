"""HTTP client for the two-endpoint wire protocol.

``POST /v1/choice_prob`` with ``{"input": str, "choices": [str]}`` returns
``{"probs": [number]}``; ``POST /v1/embed`` with ``{"texts": [str]}`` returns
``{"embeddings": [[number]]}``.
"""

from __future__ import annotations

import logging
import os
import threading
import time
from collections.abc import Sequence
from dataclasses import dataclass

import httpx

from ..errors import BackendError
from .base import CHOICE_PROB_PATH, EMBED_PATH, ChoiceProbRequest, ChoiceProbResponse, parse_embed_reply

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.2  # seconds before the first retry; doubles each time

    def delays(self):
        for i in range(self.attempts - 1):
            yield self.backoff * (2**i)


class WireBackend:
    """Thread-safe client with bounded in-flight requests.

    Only transport failures (connection errors, timeouts) are retried; a
    well-formed HTTP error reply fails immediately.
    """

    def __init__(
        self,
        endpoint: str,
        token_env: str | None = None,
        timeout: float = 30.0,
        retry: RetryPolicy = RetryPolicy(),
        max_in_flight: int = 8,
        transport: httpx.BaseTransport | None = None,
    ):
        headers = {}
        if token_env:
            token = os.environ.get(token_env)
            if not token:
                raise BackendError(f"auth token environment variable {token_env!r} is not set")
            headers["Authorization"] = f"Bearer {token}"
        self.endpoint = endpoint.rstrip("/")
        self.provider_id = f"wire:{self.endpoint}"
        self.retry = retry
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._client = httpx.Client(base_url=self.endpoint, timeout=timeout, headers=headers, transport=transport)

    def close(self) -> None:
        self._client.close()

    def __enter__(self) -> WireBackend:
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _post(self, path: str, body: dict) -> object:
        delays = iter(self.retry.delays())
        while True:
            try:
                with self._slots:
                    resp = self._client.post(path, json=body)
                break
            except httpx.TransportError as exc:
                delay = next(delays, None)
                if delay is None:
                    raise BackendError(f"{path}: transport failure after {self.retry.attempts} attempts: {exc}") from exc
                log.warning("%s: %s; retrying in %.2fs", path, exc, delay)
                time.sleep(delay)
        if resp.status_code != 200:
            try:
                detail = resp.json().get("error", resp.text)
            except ValueError:
                detail = resp.text
            raise BackendError(f"{path}: HTTP {resp.status_code}: {detail}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"{path}: reply is not JSON") from exc

    def choice_prob(self, request: ChoiceProbRequest) -> ChoiceProbResponse:
        body = self._post(CHOICE_PROB_PATH, request.body())
        return ChoiceProbResponse.from_body(body, len(request.choices))

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        body = self._post(EMBED_PATH, {"texts": list(texts)})
        return parse_embed_reply(body, len(texts))
