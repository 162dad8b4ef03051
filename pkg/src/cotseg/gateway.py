"""HTTP client for external model adapters.

Speaks the versioned JSON protocol (/v1/score, /v1/generate, /v1/info) and
exposes the results through the same scorer/generator interfaces the rest of
the pipeline uses.  Every response is checked client-side: per-token loss
must equal -logprob, token spans must tile the continuation, and entropies
must stay inside [0, ln(vocab size)].  Calls above ``max_in_flight`` queue in
arrival order.
"""

from __future__ import annotations

import math
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field
from typing import Any

import requests

from .scoring import (
    KIND_REMOTE,
    LengthExceededError,
    ScorerDescriptor,
    TokenScore,
)

ENTROPY_BOUND_TOLERANCE = 1e-9


class GatewayError(Exception):
    pass


class AdapterRequestError(GatewayError):
    """Transport failure or server error after the retry budget ran out."""


class AdapterSchemaError(GatewayError):
    """Response missing a field or carrying a wrong type; names the field."""


class AdapterConsistencyError(GatewayError):
    """Response fields violate a protocol invariant."""


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 2
    backoff: float = 0.1

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.backoff < 0:
            raise ValueError("backoff must be >= 0")


@dataclass(frozen=True)
class AdapterEndpoint:
    base_url: str
    timeout: float = 30.0
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


class _FifoSemaphore:
    """Counting semaphore that wakes waiters strictly in arrival order."""

    def __init__(self, slots: int):
        self._lock = threading.Lock()
        self._free = slots
        self._waiters: deque[threading.Event] = deque()

    def acquire(self) -> None:
        with self._lock:
            if self._free > 0 and not self._waiters:
                self._free -= 1
                return
            event = threading.Event()
            self._waiters.append(event)
        event.wait()

    def release(self) -> None:
        with self._lock:
            if self._waiters:
                self._waiters.popleft().set()
            else:
                self._free += 1

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        self.release()


def _expect(body: dict, field_name: str, kind) -> Any:
    if field_name not in body:
        raise AdapterSchemaError(f"response missing field {field_name!r}")
    value = body[field_name]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise AdapterSchemaError(f"field {field_name!r} is not a number")
        return float(value)
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise AdapterSchemaError(f"field {field_name!r} is not an integer")
        return value
    if not isinstance(value, kind):
        raise AdapterSchemaError(f"field {field_name!r} is not {kind.__name__}")
    return value


class AdapterClient:
    """One adapter endpoint with retries, fairness and response validation."""

    def __init__(self, endpoint: AdapterEndpoint, session: requests.Session | None = None):
        self.endpoint = endpoint
        self._session = session or requests.Session()
        self._gate = _FifoSemaphore(endpoint.max_in_flight)

    # -- transport ---------------------------------------------------------

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        request_id = uuid.uuid4().hex
        headers = {"X-Request-Id": request_id}
        last_error: str | None = None
        for attempt in range(self.endpoint.retry.attempts):
            if attempt:
                time.sleep(self.endpoint.retry.backoff * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    response = self._session.request(
                        method,
                        url,
                        json=payload,
                        headers=headers,
                        timeout=self.endpoint.timeout,
                    )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if response.status_code >= 500:
                last_error = f"server error {response.status_code}"
                continue
            return self._finish(response, request_id)
        raise AdapterRequestError(
            f"{method} {path} failed after {self.endpoint.retry.attempts} attempts "
            f"(request {request_id}): {last_error}"
        )

    def _finish(self, response: requests.Response, request_id: str) -> dict:
        try:
            body = response.json()
        except ValueError as exc:
            raise AdapterSchemaError(
                f"non-JSON response (request {request_id})"
            ) from exc
        if response.status_code >= 400:
            message = body.get("error", "") if isinstance(body, dict) else ""
            if "length exceeded" in str(message):
                raise LengthExceededError(str(message))
            raise AdapterRequestError(
                f"adapter returned {response.status_code} (request {request_id}): {message}"
            )
        if not isinstance(body, dict):
            raise AdapterSchemaError("response body is not an object")
        return body

    # -- protocol ----------------------------------------------------------

    def info(self) -> dict:
        body = self._request("GET", "/v1/info")
        return {
            "identity": _expect(body, "identity", str),
            "fine_tuned": _expect(body, "fine_tuned", bool),
            "vocab_size": _expect(body, "vocab_size", int),
        }

    def score(self, context: str, continuation: str) -> tuple[list[TokenScore], int]:
        if not continuation:
            raise ValueError("continuation must be non-empty")
        body = self._request(
            "POST", "/v1/score", {"context": context, "continuation": continuation}
        )
        vocab_size = _expect(body, "vocab_size", int)
        raw_tokens = _expect(body, "tokens", list)
        entropy_cap = math.log(vocab_size) + ENTROPY_BOUND_TOLERANCE
        scores: list[TokenScore] = []
        cursor = 0
        for item in raw_tokens:
            if not isinstance(item, dict):
                raise AdapterSchemaError("field 'tokens' must hold objects")
            token = _expect(item, "token", str)
            logprob = _expect(item, "logprob", float)
            entropy = _expect(item, "entropy", float)
            loss = _expect(item, "loss", float)
            span = _expect(item, "span", list)
            if len(span) != 2 or not all(
                isinstance(v, int) and not isinstance(v, bool) for v in span
            ):
                raise AdapterSchemaError("field 'span' must be [start, end]")
            if loss != -logprob:
                raise AdapterConsistencyError(
                    f"token {token!r}: loss {loss!r} != -logprob {-logprob!r}"
                )
            if logprob > 0:
                raise AdapterConsistencyError(f"token {token!r}: positive logprob")
            if entropy < -ENTROPY_BOUND_TOLERANCE or entropy > entropy_cap:
                raise AdapterConsistencyError(
                    f"token {token!r}: entropy {entropy!r} outside [0, ln {vocab_size}]"
                )
            if span[0] != cursor or span[1] <= span[0]:
                raise AdapterConsistencyError(
                    f"token spans do not tile the continuation at {span}"
                )
            cursor = span[1]
            scores.append(
                TokenScore(
                    token=token,
                    logprob=logprob,
                    entropy=entropy,
                    loss=loss,
                    span=(span[0], span[1]),
                )
            )
        if cursor != len(continuation):
            raise AdapterConsistencyError(
                f"token spans cover {cursor} of {len(continuation)} characters"
            )
        return scores, vocab_size

    def generate(
        self, input: str, max_new_tokens: int = 256, seed: int | None = None
    ) -> str:
        payload: dict = {"input": input, "max_new_tokens": max_new_tokens}
        if seed is not None:
            payload["seed"] = seed
        body = self._request("POST", "/v1/generate", payload)
        output = _expect(body, "output", str)
        _expect(body, "deterministic", bool)
        if input and input in output:
            raise AdapterConsistencyError("no progress: output echoes the full input")
        return output


def remote_score(
    endpoint: AdapterEndpoint | AdapterClient, context: str, continuation: str
) -> list[TokenScore]:
    client = endpoint if isinstance(endpoint, AdapterClient) else AdapterClient(endpoint)
    scores, _ = client.score(context, continuation)
    return scores


def remote_generate(
    endpoint: AdapterEndpoint | AdapterClient,
    input: str,
    max_new_tokens: int = 256,
    seed: int | None = None,
) -> str:
    client = endpoint if isinstance(endpoint, AdapterClient) else AdapterClient(endpoint)
    return client.generate(input, max_new_tokens=max_new_tokens, seed=seed)


class RemoteSequenceScorer:
    """SequenceScorer backed by an adapter endpoint."""

    def __init__(self, client: AdapterClient):
        self._client = client
        info = client.info()
        self.vocab_size = info["vocab_size"]
        self.descriptor = ScorerDescriptor(
            kind=KIND_REMOTE,
            identity=info["identity"],
            fine_tuned=info["fine_tuned"],
        )

    def score(self, context: str, continuation: str) -> list[TokenScore]:
        scores, vocab_size = self._client.score(context, continuation)
        if vocab_size != self.vocab_size:
            raise AdapterConsistencyError(
                f"vocab_size changed from {self.vocab_size} to {vocab_size}"
            )
        return scores


class RemoteGenerator:
    """Generator backed by an adapter endpoint."""

    def __init__(
        self,
        client: AdapterClient,
        max_new_tokens: int = 256,
        seed: int | None = None,
    ):
        self._client = client
        self.max_new_tokens = max_new_tokens
        self.seed = seed
        self.descriptor = client.info()["identity"]

    def generate(self, input: str) -> str:
        return self._client.generate(
            input, max_new_tokens=self.max_new_tokens, seed=self.seed
        )
