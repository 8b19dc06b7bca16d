"""Local HTTP server speaking the wire protocol, backed by any in-process backend."""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from ..errors import BackendError, DataError, FixtureMissError
from .base import CHOICE_PROB_PATH, EMBED_PATH, Backend, ChoiceProbRequest

log = logging.getLogger(__name__)


def _handler_for(backend: Backend) -> type[BaseHTTPRequestHandler]:
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):
            log.debug("%s - " + fmt, self.address_string(), *args)

        def _send(self, status: int, payload: dict) -> None:
            data = json.dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

        def do_POST(self) -> None:
            length = int(self.headers.get("Content-Length") or 0)
            try:
                body = json.loads(self.rfile.read(length) or b"null")
            except json.JSONDecodeError:
                self._send(400, {"error": "request body is not JSON"})
                return
            try:
                if self.path == CHOICE_PROB_PATH:
                    if not isinstance(body, dict) or not isinstance(body.get("input"), str):
                        raise DataError("expected {'input': str, 'choices': [str]}")
                    req = ChoiceProbRequest(body["input"], tuple(body.get("choices", ())))
                    self._send(200, backend.choice_prob(req).body())
                elif self.path == EMBED_PATH:
                    texts = body.get("texts") if isinstance(body, dict) else None
                    if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
                        raise DataError("expected {'texts': [str]}")
                    self._send(200, {"embeddings": backend.embed(texts)})
                else:
                    self._send(404, {"error": f"unknown path {self.path}"})
            except FixtureMissError as exc:
                self._send(404, {"error": str(exc)})
            except DataError as exc:
                self._send(400, {"error": str(exc)})
            except BackendError as exc:
                self._send(502, {"error": str(exc)})

    return Handler


def make_server(backend: Backend, host: str = "127.0.0.1", port: int = 0) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer((host, port), _handler_for(backend))
    server.daemon_threads = True
    return server


def serve_in_thread(backend: Backend, host: str = "127.0.0.1", port: int = 0) -> tuple[ThreadingHTTPServer, str]:
    """Start a server on a background thread; returns it with its base URL."""
    server = make_server(backend, host, port)
    t = threading.Thread(target=server.serve_forever, name="aspecteval-mock-server", daemon=True)
    t.start()
    h, p = server.server_address[:2]
    return server, f"http://{h}:{p}"
