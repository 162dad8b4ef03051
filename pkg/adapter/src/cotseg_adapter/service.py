"""HTTP service implementing the /v1 scoring and generation protocol.

Field names and error semantics follow the gateway contract exactly:
POST /v1/score  {context, continuation} -> {tokens: [...], vocab_size},
POST /v1/generate {input, max_new_tokens, seed?} -> {output, deterministic},
GET  /v1/info -> {identity, fine_tuned, vocab_size}.  The client-supplied
X-Request-Id header is echoed on every response; over-length inputs get a
413 whose error text says "length exceeded".
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .model import ScoringModel


def create_app(model: ScoringModel, identity: str, fine_tuned: bool) -> FastAPI:
    app = FastAPI(title="cotseg-adapter")

    def reply(request: Request, status: int, body: dict) -> JSONResponse:
        headers = {}
        request_id = request.headers.get("X-Request-Id")
        if request_id:
            headers["X-Request-Id"] = request_id
        return JSONResponse(body, status_code=status, headers=headers)

    @app.get("/v1/info")
    def info(request: Request):
        return reply(
            request,
            200,
            {
                "identity": identity,
                "fine_tuned": fine_tuned,
                "vocab_size": model.vocab_size,
            },
        )

    @app.post("/v1/score")
    async def score(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return reply(request, 400, {"error": "body must be JSON"})
        context = payload.get("context")
        continuation = payload.get("continuation")
        if not isinstance(context, str) or not isinstance(continuation, str):
            return reply(request, 400, {"error": "context and continuation must be strings"})
        if not continuation:
            return reply(request, 400, {"error": "continuation must be non-empty"})
        try:
            scores = model.score(context, continuation)
        except OverflowError:
            return reply(request, 413, {"error": "length exceeded"})
        return reply(
            request,
            200,
            {
                "tokens": [
                    {
                        "token": s.token,
                        "logprob": s.logprob,
                        "entropy": s.entropy,
                        "loss": s.loss,
                        "span": [s.span[0], s.span[1]],
                    }
                    for s in scores
                ],
                "vocab_size": model.vocab_size,
            },
        )

    @app.post("/v1/generate")
    async def generate(request: Request):
        try:
            payload = await request.json()
        except Exception:
            return reply(request, 400, {"error": "body must be JSON"})
        text = payload.get("input")
        if not isinstance(text, str):
            return reply(request, 400, {"error": "input must be a string"})
        max_new_tokens = payload.get("max_new_tokens", 128)
        if not isinstance(max_new_tokens, int) or max_new_tokens < 1:
            return reply(request, 400, {"error": "max_new_tokens must be a positive integer"})
        # greedy decoding: the seed is accepted for protocol compatibility
        try:
            output = model.generate(text, max_new_tokens=max_new_tokens)
        except OverflowError:
            return reply(request, 413, {"error": "length exceeded"})
        return reply(request, 200, {"output": output, "deterministic": True})

    return app
