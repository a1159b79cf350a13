"""Local chat-completions endpoint for tests and offline dry runs.

Injects transport failures (HTTP 5xx/429 or a dropped connection) and
malformed replies at configurable rates, and records the peak number of
requests handled concurrently.
"""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer


def default_reply(body: dict) -> str:
    parts = body["messages"][-1]["content"]
    text = next((p["text"] for p in parts if p.get("type") == "text"), "")
    n_images = sum(1 for p in parts if p.get("type") == "image_url")
    tag = hashlib.sha256(text.encode("utf-8")).hexdigest()[:8]
    item = {
        "question": f"What is shown across the {n_images} images? [{tag}]",
        "answer": f"mock answer {tag}",
        "rationale": f"Step 1: read all {n_images} images. Step 2: combine the facts. [{tag}]",
    }
    return "Here you go:\n```json\n" + json.dumps([item], indent=2) + "\n```\n"


class MockChatServer:
    def __init__(
        self,
        failure_rate: float = 0.0,
        malformed_rate: float = 0.0,
        seed: int = 0,
        latency: float = 0.0,
        api_key: str | None = None,
        reply_fn=default_reply,
        failure_kinds=(500, 503, 429, "drop"),
        host: str = "127.0.0.1",
        port: int = 0,
    ):
        self.failure_rate = failure_rate
        self.malformed_rate = malformed_rate
        self.latency = latency
        self.api_key = api_key
        self.reply_fn = reply_fn
        self.failure_kinds = tuple(failure_kinds)
        self._rng = random.Random(seed)
        self._lock = threading.Lock()
        self.requests = 0
        self.in_flight = 0
        self.max_in_flight = 0
        self.injected_failures = 0
        self.injected_malformed = 0
        self.bodies: list[dict] = []
        self._server = ThreadingHTTPServer((host, port), self._handler_class())
        self._server.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def url(self) -> str:
        host, port = self._server.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockChatServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.stop()

    def _decide(self):
        with self._lock:
            self.requests += 1
            self.in_flight += 1
            self.max_in_flight = max(self.max_in_flight, self.in_flight)
            r = self._rng.random()
            if r < self.failure_rate:
                self.injected_failures += 1
                return self._rng.choice(self.failure_kinds)
            if r < self.failure_rate + self.malformed_rate:
                self.injected_malformed += 1
                return "malformed"
            return "ok"

    def _done(self):
        with self._lock:
            self.in_flight -= 1

    def _handler_class(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _send(self, code: int, payload: dict):
                data = json.dumps(payload).encode("utf-8")
                self.send_response(code)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def do_POST(self):
                length = int(self.headers.get("Content-Length") or 0)
                raw = self.rfile.read(length)
                if not self.path.rstrip("/").endswith("/chat/completions"):
                    self._send(404, {"error": {"message": "not found"}})
                    return
                if server.api_key and self.headers.get("Authorization") != f"Bearer {server.api_key}":
                    self._send(401, {"error": {"message": "bad credential"}})
                    return
                outcome = server._decide()
                try:
                    if server.latency:
                        time.sleep(server.latency)
                    body = json.loads(raw)
                    with server._lock:
                        server.bodies.append(body)
                    if outcome == "drop":
                        self.close_connection = True
                        return
                    if isinstance(outcome, int):
                        self._send(outcome, {"error": {"message": f"injected {outcome}"}})
                        return
                    content = (
                        "I'm sorry, the requested format {question: ??? is unavailable"
                        if outcome == "malformed"
                        else server.reply_fn(body)
                    )
                    self._send(
                        200,
                        {
                            "id": "mock",
                            "object": "chat.completion",
                            "model": body.get("model"),
                            "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
                        },
                    )
                finally:
                    server._done()

        return Handler
