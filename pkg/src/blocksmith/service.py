"""HTTP service exposing sessions, steering, artifacts, and diversity.

One in-memory steering engine per session, with every admitted spec also
written to the content-addressed store and an event appended to the
session log. Instructions validate (with budgeted repair) before they
commit; steering edits validate before they stay; rejected candidates
roll back and surface as structured 422 errors of the shape
``{code, stage, failure_kind, diagnostics}``.
"""
from __future__ import annotations

import os
import threading
import uuid
from typing import Optional

from fastapi import FastAPI, HTTPException, Query, Response
from pydantic import BaseModel, Field

from .diversity import TooFewTasks, cumulative_curve, pooled_curve
from .frontend import GrammarBackend, UnparsableInstruction, parse_instruction
from .scene import sample_initial, settle, state_rows
from .steering import SteeringEngine
from .store import HashMismatch, NotFound, Store
from .synthesis import verify_goal
from .validation import orchestrate, run_pipeline

ENV_STORE = "BLOCKSMITH_STORE"
ENV_HOST = "BLOCKSMITH_HOST"
ENV_PORT = "BLOCKSMITH_PORT"
ENV_BACKEND = "BLOCKSMITH_BACKEND"

_BACKENDS = {"grammar": GrammarBackend}

DEFAULT_STORE_PATH = "./blocksmith_store"
DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8787


class SessionBody(BaseModel):
    session_id: Optional[str] = None


class InstructionBody(BaseModel):
    text: str


class SteerBody(BaseModel):
    text: str


class RevertBody(BaseModel):
    version: int


class DiversityBody(BaseModel):
    groups: dict[str, list[str]]
    shuffles: int = Field(default=100, ge=1, le=10000)
    seed: int = 0


def _error(status: int, code: str, stage: str = "", failure_kind: str = "", diagnostics: str = "") -> HTTPException:
    return HTTPException(
        status_code=status,
        detail={
            "code": code,
            "stage": stage,
            "failure_kind": failure_kind,
            "diagnostics": diagnostics,
        },
    )


def create_app(store_path: Optional[str] = None, backend_name: Optional[str] = None) -> FastAPI:
    store = Store(store_path or os.environ.get(ENV_STORE, DEFAULT_STORE_PATH))
    backend_key = backend_name or os.environ.get(ENV_BACKEND, "grammar")
    if backend_key not in _BACKENDS:
        raise ValueError(f"unknown proposal backend {backend_key!r}; known: {sorted(_BACKENDS)}")
    backend = _BACKENDS[backend_key]()

    app = FastAPI(title="blocksmith", version="0.1.0")
    engines: dict[str, SteeringEngine] = {}
    engines_guard = threading.Lock()

    def engine_for(session_id: str) -> SteeringEngine:
        engine = engines.get(session_id)
        if engine is None:
            raise _error(404, "NoSuchSession", diagnostics=f"session {session_id!r} not found")
        return engine

    @app.post("/sessions", status_code=201)
    def create_session(body: Optional[SessionBody] = None) -> dict:
        session_id = (body.session_id if body else None) or f"s-{uuid.uuid4().hex[:12]}"
        with engines_guard:
            if session_id in engines:
                raise _error(409, "SessionExists", diagnostics=session_id)
            try:
                store.create_session(session_id)
            except NotFound:
                raise _error(422, "BadSessionId", diagnostics=session_id)
            except Exception as exc:
                raise _error(409, "SessionExists", diagnostics=str(exc))
            engines[session_id] = SteeringEngine()
        return {"session_id": session_id}

    @app.post("/sessions/{session_id}/instruction")
    def post_instruction(session_id: str, body: InstructionBody) -> dict:
        engine = engine_for(session_id)
        if len(engine) > 0:
            raise _error(
                409,
                "SessionNotEmpty",
                diagnostics="this session already has a task; use steer or revert",
            )
        try:
            schema = parse_instruction(body.text, backend=backend)
        except UnparsableInstruction as exc:
            raise _error(422, "UnparsableInstruction", stage="Parse", diagnostics=str(exc))
        result = orchestrate(schema)
        if not result.admitted:
            failure = result.reports[-1].failure
            raise _error(
                422,
                "ValidationRejected",
                stage=failure.stage if failure else "",
                failure_kind=failure.kind if failure else "",
                diagnostics=failure.details if failure else "",
            )
        adopted = engine.adopt(body.text, result.schema, result.spec)
        digest = store.put_spec(adopted.spec)
        store.append_event(
            session_id,
            {
                "kind": "instruction",
                "text": body.text,
                "version": adopted.snapshot.version_id,
                "hash": digest,
                "category": adopted.category,
                "repairs": [s.strategy for s in result.steps],
            },
        )
        return _result_obj(adopted, digest, repairs=[s.strategy for s in result.steps])

    @app.post("/sessions/{session_id}/steer")
    def post_steer(session_id: str, body: SteerBody) -> dict:
        engine = engine_for(session_id)
        if len(engine) == 0:
            raise _error(409, "SessionEmpty", diagnostics="give an instruction first")
        try:
            result = engine.steer(body.text)
        except UnparsableInstruction as exc:
            raise _error(422, "UnparsableInstruction", stage="Steer", diagnostics=str(exc))
        report = run_pipeline(result.spec)
        if not report.admitted:
            engine.rollback()
            failure = report.failure
            raise _error(
                422,
                "ValidationRejected",
                stage=failure.stage if failure else "",
                failure_kind=failure.kind if failure else "",
                diagnostics=failure.details if failure else "",
            )
        digest = store.put_spec(result.spec)
        store.append_event(
            session_id,
            {
                "kind": "steer",
                "text": body.text,
                "version": result.snapshot.version_id,
                "hash": digest,
                "category": result.category,
                "reference_version": result.reference_version,
            },
        )
        return _result_obj(result, digest)

    @app.post("/sessions/{session_id}/revert")
    def post_revert(session_id: str, body: RevertBody) -> dict:
        engine = engine_for(session_id)
        if not 0 <= body.version < len(engine):
            raise _error(404, "NoSuchVersion", diagnostics=f"version {body.version}")
        result = engine.steer(f"go back to version {body.version}")
        digest = store.put_spec(result.spec)
        store.append_event(
            session_id,
            {
                "kind": "revert",
                "version": result.snapshot.version_id,
                "hash": digest,
                "reference_version": result.reference_version,
            },
        )
        return _result_obj(result, digest)

    @app.get("/sessions/{session_id}/versions")
    def get_versions(session_id: str) -> dict:
        engine = engine_for(session_id)
        return {"versions": [snap.to_obj() for snap in engine.versions]}

    @app.get("/sessions/{session_id}/state/{version}")
    def get_state(
        session_id: str,
        version: int,
        phase: str = Query(default="initial", pattern="^(initial|goal)$"),
        seed: int = Query(default=0, ge=0),
    ) -> dict:
        engine = engine_for(session_id)
        if not 0 <= version < len(engine):
            raise _error(404, "NoSuchVersion", diagnostics=f"version {version}")
        spec = engine.version(version).spec
        if phase == "initial":
            try:
                state = settle(sample_initial(spec, seed)).settled
            except Exception as exc:
                raise _error(422, "StateUnavailable", failure_kind="RuntimeError", diagnostics=str(exc))
        else:
            check = verify_goal(spec, seed)
            if check.state is None:
                raise _error(
                    422,
                    "StateUnavailable",
                    failure_kind=check.failure_kind or "",
                    diagnostics=check.details,
                )
            state = check.state
        return {
            "version": version,
            "phase": phase,
            "seed": seed,
            "constants": state.constants.to_obj(),
            "rows": state_rows(state),
        }

    @app.get("/artifacts/{digest}")
    def get_artifact(digest: str) -> Response:
        try:
            data = store.get_bytes(digest)
        except NotFound:
            raise _error(404, "NotFound", diagnostics=digest)
        except HashMismatch as exc:
            raise _error(500, "HashMismatch", diagnostics=str(exc))
        return Response(content=data, media_type="application/json")

    @app.post("/diversity")
    def post_diversity(body: DiversityBody) -> dict:
        try:
            pooled = pooled_curve(body.groups, shuffles=body.shuffles, seed=body.seed)
            cumulative = {
                user: cumulative_curve(texts)
                for user, texts in body.groups.items()
                if len(texts) >= 2
            }
            combined_texts = [t for texts in body.groups.values() for t in texts]
            combined = cumulative_curve(combined_texts)
        except TooFewTasks as exc:
            raise _error(422, "TooFewTasks", diagnostics=str(exc))
        return {
            "pooled": {"ks": list(pooled.ks), "mean": list(pooled.mean), "ci95": list(pooled.ci95)},
            "cumulative": {
                user: {"ns": list(c.ns), "values": list(c.values)}
                for user, c in cumulative.items()
            },
            "combined": {"ns": list(combined.ns), "values": list(combined.values)},
        }

    @app.get("/health")
    def health() -> dict:
        return {"ok": True, "backend": backend_key, "sessions": len(engines)}

    return app


def _result_obj(result, digest: str, repairs: Optional[list[str]] = None) -> dict:
    obj = {
        "version": result.snapshot.version_id,
        "category": result.category,
        "reference_version": result.reference_version,
        "hash": digest,
        "snapshot": result.snapshot.to_obj(),
        "spec": result.spec.to_obj(),
    }
    if repairs is not None:
        obj["repairs"] = repairs
    return obj


def serve(host: Optional[str] = None, port: Optional[int] = None, store_path: Optional[str] = None) -> None:
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(
        create_app(store_path=store_path),
        host=host or os.environ.get(ENV_HOST, DEFAULT_HOST),
        port=int(port if port is not None else os.environ.get(ENV_PORT, DEFAULT_PORT)),
        log_level="warning",
    )
