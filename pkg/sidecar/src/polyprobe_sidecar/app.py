"""FastAPI service exposing the candidate-scoring wire protocol.

Endpoints: POST /v1/score, GET /v1/model, GET /v1/health. Configuration via
env vars MODEL_NAME, DEVICE, MAX_MASKS, MASK_JOIN, PORT.
"""

from __future__ import annotations

import logging
import os

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel

from .scoring import OBJECT_SLOT, ScoringError, load_model, score_candidates

logger = logging.getLogger("polyprobe_sidecar")

# 104-language multilingual masked LM
DEFAULT_MODEL = "bert-base-multilingual-cased"


class ScorePayload(BaseModel):
    context: str
    candidates: list[str]


def create_app(model_name: str | None = None, device: str | None = None,
               max_masks: int | None = None, mask_join: str | None = None,
               preload: bool = True) -> FastAPI:
    model_name = model_name or os.environ.get("MODEL_NAME", DEFAULT_MODEL)
    device = device or os.environ.get("DEVICE", "cpu")
    max_masks = max_masks if max_masks is not None else int(os.environ.get("MAX_MASKS", "10"))
    mask_join = mask_join or os.environ.get("MASK_JOIN", "space")

    app = FastAPI(title="polyprobe-sidecar")
    app.state.loaded = None

    def ensure_loaded():
        if app.state.loaded is None:
            raise HTTPException(status_code=503, detail="model not loaded")
        return app.state.loaded

    def load():
        logger.info("loading %s on %s (max_masks=%d, mask_join=%s)",
                    model_name, device, max_masks, mask_join)
        app.state.loaded = load_model(model_name, device=device, max_masks=max_masks,
                                      mask_join=mask_join)
        return app.state.loaded

    app.state.load = load
    if preload:
        load()

    @app.post("/v1/score")
    def serve_score(payload: ScorePayload):
        loaded = ensure_loaded()
        if payload.context.count(OBJECT_SLOT) != 1:
            raise HTTPException(status_code=422,
                                detail=f"context must contain exactly one {OBJECT_SLOT}")
        if not payload.candidates:
            raise HTTPException(status_code=422, detail="candidates must be non-empty")
        if any(not c for c in payload.candidates):
            raise HTTPException(status_code=422, detail="candidates must not contain empty strings")
        try:
            scores, token_counts, skipped = score_candidates(loaded, payload.context,
                                                             payload.candidates)
        except ScoringError as exc:
            raise HTTPException(status_code=exc.status, detail=exc.detail)
        body = {"scores": scores, "token_counts": token_counts}
        if skipped:
            body["skipped"] = skipped
        return body

    @app.get("/v1/model")
    def serve_model():
        loaded = ensure_loaded()
        return {
            "model_name": loaded.model_name,
            "mask_token": loaded.mask_token,
            "max_masks": loaded.max_masks,
            "mask_join": loaded.mask_join,
        }

    @app.get("/v1/health")
    def serve_health():
        ensure_loaded()
        return {"status": "ok"}

    return app


def serve():
    import uvicorn

    logging.basicConfig(level=logging.INFO)
    port = int(os.environ.get("PORT", "8000"))
    uvicorn.run(create_app(), host="0.0.0.0", port=port)


if __name__ == "__main__":
    serve()
