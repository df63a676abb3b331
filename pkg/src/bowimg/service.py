"""HTTP inference service: image catalog plus fully attributed answers.

The checkpoint and feature stores are loaded once at startup and never
mutated, so request handling is plain concurrent reads. Endpoints are sync
functions; the ASGI server runs them on its worker threads.

All endpoints live under /api and speak JSON. Errors use
{"error": <code>, "detail": <message>}.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import model as model_lib
from .errors import ArgumentError, NotFoundError
from .features import MapStore, VectorStore
from .inference import VqaEngine
from .vocab import tokenize

DEFAULT_TOP_K = 3
SIDE_K = 3  # words-only / image-only list length

_THUMB_SUFFIXES = (".jpg", ".jpeg", ".png")


@dataclass
class ServiceConfig:
    checkpoint: str
    vector_store: str
    map_store: Optional[str] = None
    image_dir: Optional[str] = None
    host: str = "127.0.0.1"
    port: int = 8080
    max_question_length: int = 512
    cors_origins: List[str] = field(default_factory=lambda: ["*"])


@dataclass
class ServiceState:
    """Engine plus metadata; engine stays None until a checkpoint is loaded."""

    engine: Optional[VqaEngine] = None
    fingerprint: str = ""
    image_dir: Optional[str] = None
    max_question_length: int = 512


def load_state(config: ServiceConfig) -> ServiceState:
    checkpoint = model_lib.load(config.checkpoint)
    vector_store = VectorStore(config.vector_store)
    map_store = MapStore(config.map_store) if config.map_store else None
    engine = VqaEngine.from_checkpoint(checkpoint, vector_store, map_store)
    return ServiceState(
        engine=engine,
        fingerprint=model_lib.fingerprint(config.checkpoint),
        image_dir=config.image_dir,
        max_question_length=config.max_question_length,
    )


class AskRequest(BaseModel):
    image_id: int
    question: str
    k: int = DEFAULT_TOP_K


class McRequest(BaseModel):
    image_id: int
    question: str
    choices: List[str]


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "detail": detail})


def _thumbnail_url(image_dir: Optional[str], image_id: int) -> Optional[str]:
    if not image_dir:
        return None
    for suffix in _THUMB_SUFFIXES:
        name = f"{image_id}{suffix}"
        if (Path(image_dir) / name).is_file():
            return f"/static/{name}"
    return None


def create_app(state: ServiceState, cors_origins: Optional[List[str]] = None) -> FastAPI:
    app = FastAPI(title="bowimg", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    if state.image_dir and Path(state.image_dir).is_dir():
        app.mount("/static", StaticFiles(directory=state.image_dir), name="static")

    @app.exception_handler(RequestValidationError)
    def on_validation_error(request: Request, exc: RequestValidationError):
        return _error(400, "invalid_request", str(exc.errors()))

    @app.get("/api/health")
    def health():
        if state.engine is None:
            return _error(503, "model_not_loaded", "model is still loading")
        engine = state.engine
        return {
            "status": "ok",
            "fingerprint": state.fingerprint,
            "num_answers": engine.params.num_answers,
            "vocab_size": engine.params.vocab_size,
            "image_dim": engine.params.image_dim,
        }

    @app.get("/api/images")
    def images():
        if state.engine is None or state.engine.vector_store is None:
            return _error(503, "model_not_loaded", "model is still loading")
        return [
            {"image_id": iid, "thumbnail": _thumbnail_url(state.image_dir, iid)}
            for iid in state.engine.vector_store.image_ids()
        ]

    @app.post("/api/ask")
    def ask(body: AskRequest):
        if state.engine is None:
            return _error(503, "model_not_loaded", "model is still loading")
        if len(body.question) > state.max_question_length:
            return _error(
                400, "question_too_long",
                f"question length {len(body.question)} exceeds cap {state.max_question_length}",
            )
        if body.k < 1:
            return _error(400, "invalid_request", f"k must be >= 1, got {body.k}")
        engine = state.engine
        flags: List[str] = []
        if not tokenize(body.question):
            flags.append("empty_question")
        try:
            entries = engine.predict_topk(body.question, body.image_id, k=min(body.k, engine.num_answers))
            words_only = engine.words_only_topk(body.question, k=min(SIDE_K, engine.num_answers))
            image_only = engine.image_only_topk(body.image_id, k=min(SIDE_K, engine.num_answers))
        except NotFoundError as exc:
            return _error(404, "image_not_found", str(exc))
        cam_payload = None
        if engine.map_store is not None and body.image_id in engine.map_store:
            grid = engine.cam_for_image(body.image_id, entries[0].class_index)
            cam_payload = grid.to_json()
            cam_payload["answer"] = entries[0].answer
        importance = engine.word_importance(body.question, entries[0].class_index)
        return {
            "image_id": body.image_id,
            "question": body.question,
            "answers": [e.to_json() for e in entries],
            "word_importance": [w.to_json() for w in importance],
            "words_only": [e.to_json() for e in words_only],
            "image_only": [e.to_json() for e in image_only],
            "cam": cam_payload,
            "flags": flags,
        }

    @app.post("/api/mc")
    def multiple_choice(body: McRequest):
        if state.engine is None:
            return _error(503, "model_not_loaded", "model is still loading")
        if not body.choices:
            return _error(400, "empty_choices", "choices must be non-empty")
        if len(body.question) > state.max_question_length:
            return _error(
                400, "question_too_long",
                f"question length {len(body.question)} exceeds cap {state.max_question_length}",
            )
        try:
            result = state.engine.predict_multiple_choice(body.question, body.image_id, body.choices)
        except NotFoundError as exc:
            return _error(404, "image_not_found", str(exc))
        except ArgumentError as exc:
            return _error(400, "empty_choices", str(exc))
        return result.to_json()

    return app


def serve(config: ServiceConfig) -> None:
    """Load the model, then block serving requests."""
    import uvicorn

    state = load_state(config)
    app = create_app(state, cors_origins=config.cors_origins)
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
