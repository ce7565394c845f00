"""HTTP application exposing the scoring backends.

Endpoints (all JSON):

* ``GET  /v1/health``      → 200 ``{status, model, mock, fresh_markers}`` once
  backends are built, 503 while loading or after a load failure.
* ``POST /v1/entailment``  → ``{"probs": [[entail, neutral, contradict], ...]}``
  in request order.  Batches above ``max_batch`` are refused with 413.
* ``POST /v1/logits``      → ``{"ids", "logprobs", "decoded"}`` for the mock
  language model; 501 when serving a real checkpoint.

When a bearer token is configured, every scoring request must carry
``Authorization: Bearer <token>``; there is no other authentication scheme.
Backends are constructed on startup so the service can report 503 until they
are usable — a failed model load keeps the service alive but unready.
"""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .config import ServiceConfig
from .scoring import (
    VALID_MARKINGS,
    MockEntailmentBackend,
    MockLmBackend,
    RealNliBackend,
)


class PairIn(BaseModel):
    premise: str
    hypothesis: str


class EntailmentRequest(BaseModel):
    pairs: list[PairIn] = Field(min_length=1)
    marking: str = "none"


class LogitsRequest(BaseModel):
    prefix_text: str
    top_k: int
    prefix_ids: list[int] | None = None


def _build_entailment(config: ServiceConfig):
    if config.mock:
        return MockEntailmentBackend.from_file(config.fixtures)
    return RealNliBackend(config.model, device=config.device)


def _error(status_code: int, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"detail": detail})


def create_app(config: ServiceConfig) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        try:
            app.state.entailment = _build_entailment(config)
            app.state.lm = MockLmBackend() if config.mock else None
            app.state.ready = True
        except Exception as exc:  # keep serving; report unready via 503
            app.state.load_error = f"{type(exc).__name__}: {exc}"
        yield

    app = FastAPI(title="scorer-service", lifespan=lifespan)
    app.state.config = config
    app.state.ready = False
    app.state.load_error = None

    def _auth_failure(request: Request) -> JSONResponse | None:
        if config.token is None:
            return None
        if request.headers.get("Authorization") == f"Bearer {config.token}":
            return None
        return _error(401, "missing or invalid bearer token")

    def _not_ready() -> JSONResponse:
        if app.state.load_error is not None:
            return _error(503, f"model failed to load: {app.state.load_error}")
        return _error(503, "model is loading")

    @app.get("/v1/health")
    async def health():
        if not app.state.ready:
            status = "error" if app.state.load_error else "loading"
            body = {"status": status, "model": config.model, "mock": config.mock}
            if app.state.load_error:
                body["detail"] = app.state.load_error
            return JSONResponse(status_code=503, content=body)
        return {
            "status": "ready",
            "model": config.model,
            "mock": config.mock,
            "fresh_markers": app.state.entailment.fresh_markers,
        }

    @app.post("/v1/entailment")
    async def entailment(body: EntailmentRequest, request: Request):
        if (failure := _auth_failure(request)) is not None:
            return failure
        if not app.state.ready:
            return _not_ready()
        if body.marking not in VALID_MARKINGS:
            return _error(422, f"unknown marking {body.marking!r}")
        if len(body.pairs) > config.max_batch:
            return _error(
                413, f"batch of {len(body.pairs)} exceeds max_batch={config.max_batch}"
            )
        pairs = [(pair.premise, pair.hypothesis) for pair in body.pairs]
        return {"probs": app.state.entailment.score(pairs)}

    @app.post("/v1/logits")
    async def logits(body: LogitsRequest, request: Request):
        if (failure := _auth_failure(request)) is not None:
            return failure
        if not app.state.ready:
            return _not_ready()
        if app.state.lm is None:
            return _error(501, "logits are only served in mock mode")
        try:
            ids, logprobs, decoded = app.state.lm.top_logprobs(body.prefix_text, body.top_k)
        except ValueError as exc:
            return _error(422, str(exc))
        return {"ids": ids, "logprobs": logprobs, "decoded": decoded}

    return app
