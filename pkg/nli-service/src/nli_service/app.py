"""FastAPI application implementing the backend wire protocol.

Endpoints:
  GET  /healthz             liveness plus model-load state
  POST /v1/classify_nli     {"premise", "hypothesis"} -> {"label", "scores"}
  POST /v1/complete         deterministic echo mock (optional)
  POST /v1/representations  per-layer pooled vectors as JSONL (optional)

Schema violations return HTTP 400, over-length inputs 413, and requests that
arrive before the model finished loading 503. Handlers are synchronous, so
the framework runs them request-parallel on its worker thread pool; the
loaded model is read-only.
"""

from __future__ import annotations

import json
import os
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request, Response
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from nli_service.config import NliServiceConfig, load_config
from nli_service.model import NliScorer
from nli_service.tokenizer import count_tokens

CONFIG_ENV_VAR = "NLI_SERVICE_CONFIG"


class NliRequest(BaseModel):
    premise: str
    hypothesis: str


class CompleteRequest(BaseModel):
    prompt: str
    max_tokens: int
    temperature: float


class PairRequest(BaseModel):
    id: str
    premise: str
    hypothesis: str


class RepresentationsRequest(BaseModel):
    pairs: list[PairRequest]


def _error(status: int, name: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": name, "message": message})


def create_app(config: NliServiceConfig) -> FastAPI:
    """Build the service app; the model loads once at startup."""

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        app.state.scorer = NliScorer(
            config.resolve_model_path(), config.label_order
        )
        yield

    app = FastAPI(lifespan=lifespan)
    app.state.scorer = None

    @app.exception_handler(RequestValidationError)
    async def _on_schema_violation(request: Request, exc: RequestValidationError):
        first = exc.errors()[0] if exc.errors() else {}
        where = ".".join(str(part) for part in first.get("loc", ()))
        message = f"{first.get('msg', 'invalid request body')} at {where}"
        return _error(400, "SchemaViolation", message)

    def _checked_pair(premise: str, hypothesis: str) -> JSONResponse | None:
        if not premise.strip() or not hypothesis.strip():
            return _error(400, "SchemaViolation",
                          "premise and hypothesis must be non-empty")
        if count_tokens(premise) > config.max_premise_tokens:
            return _error(413, "OverLength",
                          f"premise exceeds {config.max_premise_tokens} tokens")
        if count_tokens(hypothesis) > config.max_hypothesis_tokens:
            return _error(413, "OverLength",
                          f"hypothesis exceeds {config.max_hypothesis_tokens} tokens")
        return None

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "model_loaded": app.state.scorer is not None}

    @app.post("/v1/classify_nli")
    def classify_nli(body: NliRequest):
        scorer: NliScorer | None = app.state.scorer
        if scorer is None:
            return _error(503, "ModelNotLoaded", "model is not loaded yet")
        problem = _checked_pair(body.premise, body.hypothesis)
        if problem is not None:
            return problem
        label, scores = scorer.classify(body.premise, body.hypothesis)
        return {"label": label, "scores": list(scores)}

    if config.enable_complete_echo:

        @app.post("/v1/complete")
        def complete(body: CompleteRequest):
            if body.max_tokens < 1:
                return _error(400, "SchemaViolation", "max_tokens must be positive")
            if body.temperature < 0:
                return _error(400, "SchemaViolation",
                              "temperature must be non-negative")
            pieces = body.prompt.split()
            return {"text": " ".join(pieces[: body.max_tokens])}

    if config.emit_representations:

        @app.post("/v1/representations")
        def representations(body: RepresentationsRequest):
            scorer: NliScorer | None = app.state.scorer
            if scorer is None:
                return _error(503, "ModelNotLoaded", "model is not loaded yet")
            if not body.pairs:
                return _error(400, "SchemaViolation", "pairs must be non-empty")
            for pair in body.pairs:
                if not pair.id.strip():
                    return _error(400, "SchemaViolation", "pair id must be non-empty")
                problem = _checked_pair(pair.premise, pair.hypothesis)
                if problem is not None:
                    return problem
            lines = []
            for pair in body.pairs:
                vectors = scorer.representations(pair.premise, pair.hypothesis)
                for layer_index, vector in enumerate(vectors):
                    lines.append(json.dumps(
                        {"pair_id": pair.id, "layer_index": layer_index,
                         "vector": vector},
                        ensure_ascii=False,
                    ))
            return Response("\n".join(lines) + "\n",
                            media_type="application/x-ndjson")

    return app


def app_from_env() -> FastAPI:
    """Uvicorn factory target; reads the config path from the environment."""
    config_path = os.environ.get(CONFIG_ENV_VAR)
    if not config_path:
        raise RuntimeError(f"{CONFIG_ENV_VAR} is not set")
    return create_app(load_config(config_path))
