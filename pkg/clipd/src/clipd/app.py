"""HTTP surface: /v1/embed/text, /v1/embed/image, /healthz.

Stateless handlers over one immutable embedder instance per process. Bodies
are JSON; images travel base64-encoded. Batches are capped at 64 items
(413 beyond that); malformed bodies return 400; while no model is loaded
every endpoint except the health probe answers 503.
"""

from __future__ import annotations

import base64
import binascii
import logging
import os
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .embedders import DEFAULT_MODEL, ModelLoadError, load_embedder

log = logging.getLogger("clipd")

BATCH_LIMIT = 64


class TextBatch(BaseModel):
    texts: list[str]


class ImageBatch(BaseModel):
    images: list[str]  # base64-encoded bytes


def create_app(model_name: str | None = None) -> FastAPI:
    model_name = model_name or os.environ.get("SCORER_MODEL", DEFAULT_MODEL)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        try:
            app.state.embedder = load_embedder(model_name)
            log.info("loaded %s (dim %d)", model_name, app.state.embedder.dim)
        except ModelLoadError as exc:
            app.state.load_error = str(exc)
            log.error("model load failed: %s", exc)
        yield

    app = FastAPI(title="clipd", lifespan=lifespan)
    app.state.model_name = model_name
    app.state.embedder = None
    app.state.load_error = ""

    @app.exception_handler(RequestValidationError)
    def malformed_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors()[:3])})

    def _not_ready():
        return JSONResponse(
            status_code=503,
            content={"status": "loading", "model_id": model_name,
                     "error": app.state.load_error},
        )

    @app.get("/healthz")
    def healthz():
        embedder = app.state.embedder
        if embedder is None:
            return _not_ready()
        return {"status": "ok", "model_id": embedder.model_id, "dim": embedder.dim}

    @app.post("/v1/embed/text")
    def embed_text(batch: TextBatch):
        embedder = app.state.embedder
        if embedder is None:
            return _not_ready()
        if len(batch.texts) > BATCH_LIMIT:
            return JSONResponse(
                status_code=413,
                content={"detail": f"batch of {len(batch.texts)} exceeds limit {BATCH_LIMIT}"},
            )
        vectors = embedder.embed_texts(batch.texts)
        return {"vectors": vectors, "model_id": embedder.model_id, "dim": embedder.dim}

    @app.post("/v1/embed/image")
    def embed_image(batch: ImageBatch):
        embedder = app.state.embedder
        if embedder is None:
            return _not_ready()
        if len(batch.images) > BATCH_LIMIT:
            return JSONResponse(
                status_code=413,
                content={"detail": f"batch of {len(batch.images)} exceeds limit {BATCH_LIMIT}"},
            )
        blobs = []
        errors = []
        for i, encoded in enumerate(batch.images):
            try:
                blobs.append(base64.b64decode(encoded, validate=True))
            except (binascii.Error, ValueError) as exc:
                errors.append({"index": i, "error": f"invalid base64: {exc}"})
        if not errors:
            try:
                vectors = embedder.embed_images(blobs)
            except Exception:
                # find the offending item(s) for a per-item diagnostic
                vectors = None
                for i, blob in enumerate(blobs):
                    try:
                        embedder.embed_images([blob])
                    except Exception as exc:
                        errors.append({"index": i, "error": f"undecodable image: {exc}"})
        if errors:
            return JSONResponse(
                status_code=400,
                content={"detail": "undecodable image items", "errors": errors},
            )
        return {"vectors": vectors, "model_id": embedder.model_id, "dim": embedder.dim}

    return app
