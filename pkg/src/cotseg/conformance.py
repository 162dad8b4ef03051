"""Wire-protocol conformance checks, shared by every adapter implementation.

``run_conformance`` exercises a live adapter over HTTP and returns a list of
human-readable failures (empty means conformant).  The same suite runs
against the in-repo stub and against real adapter services.
"""

from __future__ import annotations

import math

import requests

SCORE_CASES = (
    {"context": "2 + 3 =", "continuation": " five tokens here."},
    {"context": "", "continuation": "abab"},
    {"context": "肝脏见异常密度影，", "continuation": "考虑恶性。"},
)


def run_conformance(
    base_url: str,
    max_length: int | None = None,
    timeout: float = 10.0,
) -> list[str]:
    failures: list[str] = []
    base = base_url.rstrip("/")
    session = requests.Session()

    def check(condition: bool, message: str) -> bool:
        if not condition:
            failures.append(message)
        return condition

    # /v1/info fidelity
    response = session.get(
        f"{base}/v1/info", headers={"X-Request-Id": "conformance-info"}, timeout=timeout
    )
    if not check(response.status_code == 200, f"/v1/info returned {response.status_code}"):
        return failures
    check(
        response.headers.get("X-Request-Id") == "conformance-info",
        "/v1/info did not echo X-Request-Id",
    )
    info = response.json()
    check(isinstance(info.get("identity"), str) and info.get("identity") != "",
          "/v1/info identity missing or empty")
    check(isinstance(info.get("fine_tuned"), bool), "/v1/info fine_tuned not boolean")
    vocab_size = info.get("vocab_size")
    if not check(isinstance(vocab_size, int) and vocab_size >= 2,
                 "/v1/info vocab_size not an int >= 2"):
        return failures

    # /v1/score: span tiling, loss = -logprob, entropy bounds, determinism
    entropy_cap = math.log(vocab_size) + 1e-9
    for case in SCORE_CASES:
        bodies = []
        for _ in range(2):
            response = session.post(f"{base}/v1/score", json=case, timeout=timeout)
            if not check(
                response.status_code == 200,
                f"/v1/score {case['continuation']!r} returned {response.status_code}",
            ):
                break
            bodies.append(response.json())
        if len(bodies) < 2:
            continue
        body, repeat = bodies
        check(body == repeat, f"/v1/score {case['continuation']!r} not deterministic")
        check(body.get("vocab_size") == vocab_size,
              "/v1/score vocab_size differs from /v1/info")
        tokens = body.get("tokens")
        if not check(isinstance(tokens, list) and tokens, "/v1/score tokens missing"):
            continue
        cursor = 0
        for item in tokens:
            span = item.get("span")
            if not check(
                isinstance(span, list) and len(span) == 2 and span[0] == cursor and span[1] > span[0],
                f"/v1/score spans do not tile at {span}",
            ):
                break
            cursor = span[1]
            check(item.get("loss") == -item.get("logprob"),
                  f"/v1/score token {item.get('token')!r}: loss != -logprob")
            check(item.get("logprob") <= 0,
                  f"/v1/score token {item.get('token')!r}: positive logprob")
            check(-1e-9 <= item.get("entropy") <= entropy_cap,
                  f"/v1/score token {item.get('token')!r}: entropy outside [0, ln |V|]")
        else:
            check(
                cursor == len(case["continuation"]),
                f"/v1/score spans cover {cursor} of {len(case['continuation'])} chars",
            )

    # /v1/score rejects empty continuations
    response = session.post(
        f"{base}/v1/score", json={"context": "x", "continuation": ""}, timeout=timeout
    )
    check(400 <= response.status_code < 500, "/v1/score accepted empty continuation")

    # /v1/generate: declared-deterministic decoding must repeat exactly
    payload = {"input": "1 + 1 =", "max_new_tokens": 16, "seed": 7}
    outputs = []
    for _ in range(2):
        response = session.post(f"{base}/v1/generate", json=payload, timeout=timeout)
        if not check(response.status_code == 200,
                     f"/v1/generate returned {response.status_code}"):
            break
        body = response.json()
        check(isinstance(body.get("output"), str), "/v1/generate output not a string")
        check(isinstance(body.get("deterministic"), bool),
              "/v1/generate deterministic not boolean")
        outputs.append((body.get("output"), body.get("deterministic")))
    if len(outputs) == 2 and outputs[0][1] is True:
        check(outputs[0][0] == outputs[1][0],
              "/v1/generate declared deterministic but outputs differ")

    # over-length inputs must fail loudly, never truncate
    if max_length is not None:
        long_text = "x" * (max_length + 1)
        response = session.post(
            f"{base}/v1/score",
            json={"context": "", "continuation": long_text},
            timeout=timeout,
        )
        ok_status = check(
            400 <= response.status_code < 500,
            f"over-length score returned {response.status_code}",
        )
        if ok_status:
            check(
                "length exceeded" in str(response.json().get("error", "")),
                "over-length error does not say 'length exceeded'",
            )

    return failures
