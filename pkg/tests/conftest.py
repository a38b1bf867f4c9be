"""Shared fixtures: local stub servers for the HTTP provider clients."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest


class _StubState:
    """Mutable knobs the tests twist between requests."""

    def __init__(self) -> None:
        self.chat_response_text = "stub says hi"
        self.chat_status = 200
        self.chat_raw_body: str | None = None
        self.perplexity_value: float = 2.0
        self.embed_dimension = 8
        self.requests_seen: list[dict] = []


class _StubHandler(BaseHTTPRequestHandler):
    state: _StubState

    def log_message(self, *args) -> None:
        pass

    def _read_json(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        return json.loads(self.rfile.read(length))

    def _send(self, status: int, payload: dict | str) -> None:
        body = payload if isinstance(payload, str) else json.dumps(payload)
        data = body.encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_POST(self) -> None:
        request = self._read_json()
        self.state.requests_seen.append({"path": self.path, "body": request})
        if self.path == "/chat":
            if self.state.chat_raw_body is not None:
                self._send(self.state.chat_status, self.state.chat_raw_body)
                return
            self._send(
                self.state.chat_status,
                {"choices": [{"message": {"content": self.state.chat_response_text}}]},
            )
        elif self.path == "/embed":
            vectors = []
            for text in request["texts"]:
                # Deterministic per text: seed numpy from the text bytes.
                seed = sum(text.encode("utf-8")) % (2**32)
                rng = np.random.default_rng(seed)
                raw = rng.standard_normal(self.state.embed_dimension)
                vectors.append((raw / np.linalg.norm(raw)).tolist())
            self._send(200, {"vectors": vectors, "dimension": self.state.embed_dimension})
        elif self.path == "/perplexity":
            self._send(200, {"perplexity": self.state.perplexity_value})
        else:
            self._send(404, {"error": f"no such path {self.path}"})


@pytest.fixture
def stub_server():
    """A local HTTP server exposing /chat, /embed, and /perplexity stubs.

    Yields (base_url, state); tests mutate state to steer responses.
    """
    state = _StubState()
    handler = type("Handler", (_StubHandler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        yield f"http://127.0.0.1:{server.server_address[1]}", state
    finally:
        server.shutdown()
        thread.join(timeout=5)
