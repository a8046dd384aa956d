"""HTTP layer for the onboarding flow and integration recommendations.

Every payload carries a top-level "v": 1. Handlers are synchronous so the
framework runs them on worker threads; a per-session lock serializes all
mutations to one session while different sessions proceed concurrently.
"""

from __future__ import annotations

import threading
import uuid

import numpy as np
from fastapi import Body, FastAPI
from fastapi.responses import JSONResponse

from .dataset import StudyDataset, joint_vector, normalize_vector
from .errors import ValidationError
from .sessions import (AlreadyAnswered, HumanAICard, OnboardingSession,
                       SessionDone, build_card, recommend_vector)

VERSION = 1

_OPTION_TYPES = {
    "show_recommendations": bool,
    "n_practice": int,
    "n_test": int,
    "seed": int,
}


def _ok(payload: dict, status_code: int = 200) -> JSONResponse:
    return JSONResponse(status_code=status_code, content={"v": VERSION, **payload})


def _err(status_code: int, error: str, reason: str, **extra) -> JSONResponse:
    content = {"v": VERSION, "error": error, "reason": reason, **extra}
    return JSONResponse(status_code=status_code, content=content)


class _ServiceState:
    def __init__(self, dataset: StudyDataset, regions: list,
                 card: HumanAICard, seed: int):
        self.dataset = dataset
        self.regions = sorted(regions, key=lambda reg: reg.id)
        self.card = card
        self.seed = seed
        self.by_id = {ex.id: ex for ex in dataset.examples}
        self.sessions: dict = {}
        self.registry_lock = threading.Lock()

    def get(self, session_id: str):
        with self.registry_lock:
            return self.sessions.get(session_id)


def create_app(dataset: StudyDataset, regions: list,
               card: HumanAICard | None = None, assets_dir=None,
               seed: int = 0) -> FastAPI:
    state = _ServiceState(dataset, regions,
                          card if card is not None else build_card(dataset),
                          seed)
    app = FastAPI(title="onboarding service", docs_url=None, redoc_url=None)
    app.state.service = state

    @app.get("/health")
    def health():
        return _ok({"status": "ok", "regions": len(state.regions),
                    "examples": len(state.dataset.examples)})

    @app.get("/card")
    def card_view():
        return _ok({"card": state.card.to_json(),
                    "incomplete_fields": state.card.missing_fields()})

    @app.post("/sessions")
    def create_session(payload: dict | None = Body(default=None)):
        payload = payload or {}
        if not isinstance(payload, dict):
            return _err(400, "validation", "body must be a JSON object")
        options = payload.get("options", {})
        if not isinstance(options, dict):
            return _err(400, "validation", "options must be an object")
        unknown = set(options) - set(_OPTION_TYPES)
        if unknown:
            return _err(400, "validation", f"unknown options: {sorted(unknown)}")
        for key, value in options.items():
            expected = _OPTION_TYPES[key]
            if expected is int and isinstance(value, bool):
                return _err(400, "validation", f"option {key} must be an integer")
            if not isinstance(value, expected):
                return _err(400, "validation",
                            f"option {key} must be {expected.__name__}")
        options.setdefault("seed", state.seed)
        session_id = uuid.uuid4().hex
        try:
            session = OnboardingSession(state.dataset, state.regions, state.card,
                                        session_id=session_id, **options)
        except ValidationError as err:
            return _err(400, "validation", str(err))
        with state.registry_lock:
            state.sessions[session_id] = (session, threading.Lock())
        return _ok({"session_id": session_id}, status_code=201)

    @app.get("/sessions/{session_id}/next")
    def next_item(session_id: str):
        entry = state.get(session_id)
        if entry is None:
            return _err(404, "unknown_session", f"no session {session_id}")
        session, lock = entry
        with lock:
            try:
                return _ok({"item": session.next_item()})
            except SessionDone as err:
                return _err(409, "done", str(err))

    @app.post("/sessions/{session_id}/answer")
    def submit_answer(session_id: str, payload: dict = Body(...)):
        entry = state.get(session_id)
        if entry is None:
            return _err(404, "unknown_session", f"no session {session_id}")
        if not isinstance(payload, dict) or "answer" not in payload:
            return _err(400, "validation", "body must carry an answer field")
        used_ai = payload.get("used_ai", False)
        if not isinstance(used_ai, bool):
            return _err(400, "validation", "used_ai must be a boolean")
        item_id = payload.get("item_id")
        if item_id is not None and not isinstance(item_id, str):
            return _err(400, "validation", "item_id must be a string")
        session, lock = entry
        with lock:
            try:
                feedback = session.submit_answer(payload["answer"],
                                                 used_ai=used_ai,
                                                 item_id=item_id)
            except AlreadyAnswered as err:
                return _err(409, "already_answered", str(err),
                            item_id=err.item_id, feedback=err.feedback)
            except SessionDone as err:
                return _err(409, "done", str(err))
            except ValidationError as err:
                return _err(409, "item_mismatch", str(err))
            return _ok({"feedback": feedback, "phase": session.phase})

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str):
        entry = state.get(session_id)
        if entry is None:
            return _err(404, "unknown_session", f"no session {session_id}")
        session, lock = entry
        with lock:
            return _ok(session.transcript())

    @app.get("/recommend")
    def recommend_by_id(example_id: str):
        ex = state.by_id.get(example_id)
        if ex is None:
            return _err(404, "unknown_example", f"no example {example_id}")
        rec = recommend_vector(state.regions, joint_vector(ex))
        return _ok({"example_id": example_id, "covered": rec is not None,
                    "recommendation": rec})

    @app.post("/recommend")
    def recommend_raw(payload: dict = Body(...)):
        if not isinstance(payload, dict) or "embedding" not in payload:
            return _err(400, "validation", "body must carry an embedding field")
        manifest = state.dataset.manifest
        embedding = payload["embedding"]
        ai_features = payload.get("ai_features", [])
        if not isinstance(embedding, list) or len(embedding) != manifest.embedding_dim:
            return _err(400, "validation",
                        f"embedding must be a list of {manifest.embedding_dim} numbers")
        if not isinstance(ai_features, list) or len(ai_features) != manifest.ai_feature_dim:
            return _err(400, "validation",
                        f"ai_features must be a list of {manifest.ai_feature_dim} numbers")
        try:
            emb = np.asarray(embedding, dtype=float)
            feats = np.asarray(ai_features, dtype=float)
        except (TypeError, ValueError):
            return _err(400, "validation", "vectors must be numeric")
        if manifest.normalized:
            emb = normalize_vector(emb)
            feats = normalize_vector(feats)
        vector = np.concatenate([emb, feats])
        rec = recommend_vector(state.regions, vector)
        return _ok({"covered": rec is not None, "recommendation": rec})

    if assets_dir:
        from fastapi.staticfiles import StaticFiles
        app.mount("/assets", StaticFiles(directory=assets_dir), name="assets")

    return app
