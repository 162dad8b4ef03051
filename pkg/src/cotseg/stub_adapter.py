"""In-process reference adapter for tests and desk-scale runs.

Serves the same /v1 wire protocol as a real model adapter, backed by any
in-repo SequenceScorer (usually the n-gram scorer) and a pluggable
generation function.  Tests use the hooks to inject failures, corrupt
responses and count concurrent connections.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable

from .scoring import LengthExceededError, ScoringError, SequenceScorer


class StubAdapter:
    def __init__(
        self,
        scorer: SequenceScorer,
        generate_fn: Callable[[str, int, int | None], str] | None = None,
        identity: str | None = None,
        fine_tuned: bool | None = None,
        deterministic: bool = True,
        max_length: int | None = None,
    ):
        self.scorer = scorer
        self.generate_fn = generate_fn or (lambda text, n, seed: "stub output <STOP>")
        self.identity = identity or scorer.descriptor.identity
        self.fine_tuned = (
            scorer.descriptor.fine_tuned if fine_tuned is None else fine_tuned
        )
        self.deterministic = deterministic
        self.max_length = max_length

        # test hooks
        self.fail_next = 0               # respond 500 to this many requests
        self.mutate_score_response: Callable[[dict], dict] | None = None
        self.request_count = 0
        self.active = 0
        self.max_active = 0
        self._lock = threading.Lock()
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        assert self._server is not None, "adapter not started"
        return f"http://127.0.0.1:{self._server.server_port}"

    def start(self) -> "StubAdapter":
        adapter = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
                pass

            def _reply(self, status: int, body: dict):
                data = json.dumps(body, ensure_ascii=False).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json; charset=utf-8")
                self.send_header("Content-Length", str(len(data)))
                request_id = self.headers.get("X-Request-Id")
                if request_id:
                    self.send_header("X-Request-Id", request_id)
                self.end_headers()
                self.wfile.write(data)

            def _body(self) -> dict:
                length = int(self.headers.get("Content-Length", 0))
                if length == 0:
                    return {}
                return json.loads(self.rfile.read(length).decode("utf-8"))

            def _enter(self) -> bool:
                with adapter._lock:
                    adapter.request_count += 1
                    adapter.active += 1
                    adapter.max_active = max(adapter.max_active, adapter.active)
                    if adapter.fail_next > 0:
                        adapter.fail_next -= 1
                        return False
                return True

            def _leave(self):
                with adapter._lock:
                    adapter.active -= 1

            def do_GET(self):
                if not self._enter():
                    self._leave()
                    self._reply(500, {"error": "injected failure"})
                    return
                try:
                    if self.path == "/v1/info":
                        self._reply(
                            200,
                            {
                                "identity": adapter.identity,
                                "fine_tuned": adapter.fine_tuned,
                                "vocab_size": adapter.scorer.vocab_size,
                            },
                        )
                    else:
                        self._reply(404, {"error": "unknown path"})
                finally:
                    self._leave()

            def do_POST(self):
                payload = self._body()  # drain the body before any reply
                if not self._enter():
                    self._leave()
                    self._reply(500, {"error": "injected failure"})
                    return
                try:
                    if self.path == "/v1/score":
                        self._score(payload)
                    elif self.path == "/v1/generate":
                        self._generate(payload)
                    else:
                        self._reply(404, {"error": "unknown path"})
                except Exception as exc:
                    self._reply(500, {"error": f"{type(exc).__name__}: {exc}"})
                finally:
                    self._leave()

            def _score(self, payload: dict):
                context = payload.get("context")
                continuation = payload.get("continuation")
                if not isinstance(context, str) or not isinstance(continuation, str):
                    self._reply(400, {"error": "context and continuation must be strings"})
                    return
                if not continuation:
                    self._reply(400, {"error": "continuation must be non-empty"})
                    return
                if (
                    adapter.max_length is not None
                    and len(context) + len(continuation) > adapter.max_length
                ):
                    self._reply(413, {"error": "length exceeded"})
                    return
                try:
                    tokens = adapter.scorer.score(context, continuation)
                except LengthExceededError:
                    self._reply(413, {"error": "length exceeded"})
                    return
                except ScoringError as exc:
                    self._reply(400, {"error": str(exc)})
                    return
                body = {
                    "tokens": [
                        {
                            "token": t.token,
                            "logprob": t.logprob,
                            "entropy": t.entropy,
                            "loss": t.loss,
                            "span": [t.span[0], t.span[1]],
                        }
                        for t in tokens
                    ],
                    "vocab_size": adapter.scorer.vocab_size,
                }
                if adapter.mutate_score_response is not None:
                    body = adapter.mutate_score_response(body)
                self._reply(200, body)

            def _generate(self, payload: dict):
                text = payload.get("input")
                if not isinstance(text, str):
                    self._reply(400, {"error": "input must be a string"})
                    return
                if (
                    adapter.max_length is not None
                    and len(text) > adapter.max_length
                ):
                    self._reply(413, {"error": "length exceeded"})
                    return
                max_new = payload.get("max_new_tokens", 256)
                seed = payload.get("seed")
                output = adapter.generate_fn(text, max_new, seed)
                self._reply(
                    200, {"output": output, "deterministic": adapter.deterministic}
                )

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.05), daemon=True
        )
        self._thread.start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None

    def __enter__(self) -> "StubAdapter":
        return self.start()

    def __exit__(self, *exc):
        self.stop()
