#!/usr/bin/env python3
"""
Guided-Wave Detector Service
Serves one edge image over HTTP: status, model summary and single-vector inference.
"""

import logging
import os
import threading
from datetime import datetime
from typing import Dict, List, Optional

import uvicorn
from fastapi import FastAPI, HTTPException
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from edge_runtime import EdgeModel, InferenceScratch, edge_infer, load
from errors import GwShmError, ImageError
from features import FEATURE_NAMES
from settings import LOG_FORMAT, LOG_LEVEL, MODEL_IMAGE, PORT

logger = logging.getLogger(__name__)

app = FastAPI(title="Guided-Wave Damage Detector")

# Loaded image; replaced whole, never mutated
MODEL_STATE: Dict = {"model": None, "path": None, "loaded_at": None, "error": None}

_scratch = threading.local()


def load_model_image(path: str) -> Optional[EdgeModel]:
    """Load an edge image into the service; failures are kept for /api/model-status."""
    logger.info("[SERVER] loading edge image %s", path)
    try:
        with open(path, "rb") as handle:
            model = load(handle.read())
    except OSError as exc:
        MODEL_STATE.update(model=None, path=path, loaded_at=None, error=f"cannot read image: {exc.strerror}")
        logger.warning("[SERVER] no model: %s", MODEL_STATE["error"])
        return None
    except ImageError as exc:
        MODEL_STATE.update(model=None, path=path, loaded_at=None, error=exc.line())
        logger.warning("[SERVER] no model: %s", MODEL_STATE["error"])
        return None
    MODEL_STATE.update(model=model, path=path, loaded_at=datetime.now(), error=None)
    logger.info("[SERVER] model ready: %d parameters, threshold %.6g", model.parameter_count, model.threshold)
    return model


def _thread_scratch() -> InferenceScratch:
    scratch = getattr(_scratch, "buffers", None)
    if scratch is None:
        scratch = _scratch.buffers = InferenceScratch()
    return scratch


class InferRequest(BaseModel):
    features: List[float]
    record_id: Optional[str] = None


@app.on_event("startup")
async def startup_event():
    if MODEL_STATE["model"] is None and MODEL_STATE["error"] is None:
        load_model_image(os.environ.get("GWSHM_MODEL_IMAGE", MODEL_IMAGE))


@app.get("/api/status")
async def status():
    return JSONResponse(content={
        "service": "gw-shm",
        "model_loaded": MODEL_STATE["model"] is not None,
        "time": datetime.now().isoformat(),
    })


@app.get("/api/model-status")
async def model_status():
    """Layer table, parameter count and threshold of the loaded image."""
    model = MODEL_STATE["model"]
    if model is None:
        return JSONResponse(content={"loaded": False, "path": MODEL_STATE["path"], "error": MODEL_STATE["error"]})
    return JSONResponse(content={
        "loaded": True,
        "path": MODEL_STATE["path"],
        "loaded_at": MODEL_STATE["loaded_at"].isoformat(),
        "format_version": model.version,
        "layers": [
            {"in": layer.in_width, "out": layer.out_width, "trainable": layer.trainable,
             "parameters": layer.parameter_count}
            for layer in model.layers
        ],
        "parameter_count": model.parameter_count,
        "threshold": model.threshold,
        "feature_names": FEATURE_NAMES,
    })


@app.post("/api/infer")
def infer(request: InferRequest):
    # sync handler: runs in the threadpool, one scratch per worker thread
    model = MODEL_STATE["model"]
    if model is None:
        raise HTTPException(status_code=503, detail="no detector image loaded")
    try:
        error, prediction = edge_infer(model, request.features, _thread_scratch())
    except GwShmError as exc:
        raise HTTPException(status_code=400, detail=exc.line())
    return {"record_id": request.record_id, "error": error, "prediction": prediction}


if __name__ == "__main__":
    logging.basicConfig(level=LOG_LEVEL, format=LOG_FORMAT)
    load_model_image(os.environ.get("GWSHM_MODEL_IMAGE", MODEL_IMAGE))
    uvicorn.run(app, host="0.0.0.0", port=PORT)
