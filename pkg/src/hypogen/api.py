"""HTTP service: session lifecycle, hypothesis browsing, expert-in-the-loop
actions, control, and a live server-sent-events stream.

All writes funnel through the engine's state keeper; reads serve from the
current store under its lock. POSTs accept an Idempotency-Key header and
replay the original response on retries.
"""

from __future__ import annotations

import json
import os
import threading
import time
from typing import Optional

from fastapi import Depends, FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from .config import EngineConfig
from .core import Hypothesis, HypothesisState, ResearchGoal
from .errors import EngineError, MissingSession, SessionTerminal, TooFewResults
from .evalharness import results_from_store, temporal_bucket_trend
from .events import ContextMemoryEvent
from .literature import LiteratureSource
from .orchestrator import Engine
from .store import SessionPhase, compute_stats

AUTH_TOKEN_ENV = "HYPOGEN_API_TOKEN"
MAX_EVENT_FIELD_CHARS = 800


class EngineManager:
    """Owns the engines behind the API and their background runners."""

    def __init__(
        self,
        base_config: Optional[EngineConfig] = None,
        *,
        literature: Optional[LiteratureSource] = None,
        autorun: bool = True,
    ) -> None:
        self.base_config = base_config or EngineConfig()
        self.literature = literature
        self.autorun = autorun
        self.sessions: dict[str, Engine] = {}
        self.idempotency: dict[tuple[str, str], tuple[int, dict]] = {}
        self._counter = 0
        self._lock = threading.Lock()
        self._runners: dict[str, threading.Thread] = {}
        self._halt = False

    def new_session_id(self) -> str:
        with self._lock:
            self._counter += 1
            return f"s-{self._counter}"

    def create_session(self, goal_text: str, overrides: dict) -> Engine:
        config = self.base_config.from_dict(
            {**json.loads(self.base_config.model_dump_json()), **overrides}
        ) if overrides else self.base_config
        session_id = self.new_session_id()
        engine = Engine(
            config, session_id=session_id, literature=self.literature
        )
        engine.start_session(ResearchGoal(goal_text=goal_text))
        self.sessions[session_id] = engine
        if self.autorun:
            self.spawn_runner(session_id)
        return engine

    def spawn_runner(self, session_id: str) -> None:
        engine = self.sessions[session_id]

        def loop() -> None:
            while not self._halt:
                if engine.store.is_terminal():
                    break
                if engine.store.phase == SessionPhase.PAUSED:
                    time.sleep(0.02)
                    continue
                if not engine.step():
                    time.sleep(0.02)

        thread = threading.Thread(target=loop, daemon=True, name=f"runner-{session_id}")
        thread.start()
        self._runners[session_id] = thread

    def engine_of(self, session_id: str) -> Engine:
        engine = self.sessions.get(session_id)
        if engine is None:
            raise HTTPException(status_code=404, detail=f"unknown session {session_id}")
        return engine

    def find_hypothesis(self, hypothesis_id: str) -> tuple[Engine, Hypothesis]:
        for engine in self.sessions.values():
            hypothesis = engine.store.hypotheses.get(hypothesis_id)
            if hypothesis is not None:
                return engine, hypothesis
        raise HTTPException(status_code=404, detail=f"unknown hypothesis {hypothesis_id}")

    def shutdown(self) -> None:
        self._halt = True


class CreateSessionBody(BaseModel):
    goal_text: str = ""
    attachments: list[str] = Field(default_factory=list)
    config: dict = Field(default_factory=dict)


class ExpertReviewBody(BaseModel):
    scores: dict[str, int] = Field(default_factory=dict)
    verdict: str = "informational"
    text: str = ""
    actor: str = "expert"


class ContributeBody(BaseModel):
    content: str = ""
    provenance_tag: str = ""


class RefineBody(BaseModel):
    text: str = ""


class GuidanceBody(BaseModel):
    text: str = ""


class ControlBody(BaseModel):
    action: str


def _redact(value: object) -> object:
    if isinstance(value, dict):
        return {
            k: "[redacted]" if k in ("transcript", "prompt") else _redact(v)
            for k, v in value.items()
        }
    if isinstance(value, list):
        return [_redact(v) for v in value]
    if isinstance(value, str) and len(value) > MAX_EVENT_FIELD_CHARS:
        return value[:MAX_EVENT_FIELD_CHARS] + "…[truncated]"
    return value


def _sse_line(event: ContextMemoryEvent) -> str:
    data = json.dumps(
        {
            "seq": event.seq,
            "timestamp": event.timestamp,
            "kind": event.kind.value,
            "body": _redact(event.body),
        }
    )
    return f"id: {event.seq}\nevent: {event.kind.value}\ndata: {data}\n\n"


def _hypothesis_row(engine: Engine, hypothesis: Hypothesis) -> dict:
    return {
        "id": hypothesis.id,
        "summary": hypothesis.summary,
        "category": hypothesis.category,
        "origin": hypothesis.origin.value,
        "state": hypothesis.state.value,
        "elo": hypothesis.elo,
        "review_count": len(hypothesis.reviews),
        "match_count": len(engine.store.matches_of(hypothesis.id)),
        "parent_ids": list(hypothesis.parent_ids),
        "created_seq": hypothesis.created_seq,
        "provenance_tag": hypothesis.provenance_tag,
    }


def create_app(manager: Optional[EngineManager] = None) -> FastAPI:
    manager = manager or EngineManager()
    app = FastAPI(title="hypogen", version="0.1.0")
    app.state.manager = manager

    def auth(authorization: str = Header(default="")) -> None:
        token = os.environ.get(AUTH_TOKEN_ENV, "")
        if not token:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    def idempotent(request: Request, key: Optional[str]):
        if not key:
            return None
        return manager.idempotency.get((request.url.path, key))

    def remember(request: Request, key: Optional[str], status: int, payload: dict) -> None:
        if key:
            manager.idempotency[(request.url.path, key)] = (status, payload)

    @app.post("/v1/sessions", dependencies=[Depends(auth)])
    def create_session(
        body: CreateSessionBody,
        request: Request,
        idempotency_key: Optional[str] = Header(default=None, alias="Idempotency-Key"),
    ):
        cached = idempotent(request, idempotency_key)
        if cached:
            return JSONResponse(cached[1], status_code=cached[0])
        if not body.goal_text.strip():
            raise HTTPException(status_code=400, detail="goal_text must be non-empty")
        try:
            engine = manager.create_session(body.goal_text, body.config)
        except EngineError as exc:
            raise HTTPException(status_code=503, detail=str(exc)) from exc
        payload = {"session_id": engine.session_id}
        remember(request, idempotency_key, 201, payload)
        return JSONResponse(payload, status_code=201)

    @app.get("/v1/sessions", dependencies=[Depends(auth)])
    def list_sessions():
        rows = []
        for session_id, engine in manager.sessions.items():
            rows.append(
                {
                    "session_id": session_id,
                    "phase": engine.store.phase.value,
                    "goal_text": engine.store.goal.goal_text if engine.store.goal else "",
                    "hypotheses": len(engine.store.hypotheses),
                    "matches": len(engine.store.matches),
                }
            )
        return {"sessions": rows}

    @app.get("/v1/sessions/{session_id}", dependencies=[Depends(auth)])
    def session_summary(session_id: str):
        engine = manager.engine_of(session_id)
        with engine.lock:
            store = engine.store
            stats = compute_stats(store, top_k=engine.config.top_k_stats)
            critique = store.latest_critique()
            overview = store.latest_overview()
            return {
                "session_id": session_id,
                "phase": store.phase.value,
                "budgets": store.budgets.model_dump(),
                "consumed": store.consumed.model_dump(),
                "stats": stats.model_dump(mode="json"),
                "plan_version": store.plan.version if store.plan else 0,
                "latest_critique": critique.body if critique else None,
                "latest_overview": overview.body if overview else None,
                "alerts": [a.model_dump(mode="json") for a in store.alerts],
                "dead_letter_count": len(store.dead_letter),
            }

    @app.get("/v1/sessions/{session_id}/hypotheses", dependencies=[Depends(auth)])
    def list_hypotheses(
        session_id: str,
        state: Optional[str] = Query(default=None),
        sort: str = Query(default="elo"),
    ):
        engine = manager.engine_of(session_id)
        with engine.lock:
            rows = []
            for hypothesis in engine.store.hypotheses.values():
                if state is not None:
                    if hypothesis.state.value != state:
                        continue
                elif hypothesis.state == HypothesisState.EXCLUDED_UNSAFE:
                    continue
                rows.append(_hypothesis_row(engine, hypothesis))
            if sort == "created":
                rows.sort(key=lambda r: r["created_seq"])
            else:
                rows.sort(key=lambda r: (-r["elo"], r["created_seq"]))
            return {"hypotheses": rows}

    def _hypothesis_detail(engine: Engine, hypothesis: Hypothesis) -> dict:
        store = engine.store
        detail = _hypothesis_row(engine, hypothesis)
        detail["content"] = hypothesis.content
        detail["annotations"] = list(store.annotations.get(hypothesis.id, []))
        detail["reviews"] = [
            store.reviews[rid].model_dump(mode="json")
            for rid in hypothesis.reviews
            if rid in store.reviews
        ]
        detail["matches"] = [
            {
                "id": m.id,
                "opponent": m.hypothesis_b if m.hypothesis_a == hypothesis.id else m.hypothesis_a,
                "won": (m.winner.value == "a") == (m.hypothesis_a == hypothesis.id),
                "mode": m.mode.value,
            }
            for m in store.matches_of(hypothesis.id)
        ]
        return detail

    @app.get("/v1/sessions/{session_id}/hypotheses/{hypothesis_id}", dependencies=[Depends(auth)])
    def hypothesis_detail(session_id: str, hypothesis_id: str):
        engine = manager.engine_of(session_id)
        hypothesis = engine.store.hypotheses.get(hypothesis_id)
        if hypothesis is None:
            raise HTTPException(status_code=404, detail=f"unknown hypothesis {hypothesis_id}")
        with engine.lock:
            return _hypothesis_detail(engine, hypothesis)

    @app.get("/v1/hypotheses/{hypothesis_id}", dependencies=[Depends(auth)])
    def hypothesis_detail_global(hypothesis_id: str):
        engine, hypothesis = manager.find_hypothesis(hypothesis_id)
        with engine.lock:
            return _hypothesis_detail(engine, hypothesis)

    @app.post("/v1/hypotheses/{hypothesis_id}/reviews", dependencies=[Depends(auth)])
    def submit_expert_review(
        hypothesis_id: str,
        body: ExpertReviewBody,
        request: Request,
        idempotency_key: Optional[str] = Header(default=None, alias="Idempotency-Key"),
    ):
        cached = idempotent(request, idempotency_key)
        if cached:
            return JSONResponse(cached[1], status_code=cached[0])
        engine, _ = manager.find_hypothesis(hypothesis_id)
        for name, score in body.scores.items():
            if not 1 <= score <= 5:
                raise HTTPException(
                    status_code=422, detail=f"score {name}={score} outside 1..5"
                )
        if body.verdict not in ("accept", "reject", "flag_unsafe", "informational"):
            raise HTTPException(status_code=422, detail=f"bad verdict {body.verdict!r}")
        review = engine.submit_expert_review(
            hypothesis_id,
            scores=body.scores,
            verdict=body.verdict,
            text=body.text,
            actor=body.actor,
        )
        payload = review.model_dump(mode="json")
        remember(request, idempotency_key, 201, payload)
        return JSONResponse(payload, status_code=201)

    @app.post("/v1/sessions/{session_id}/hypotheses", dependencies=[Depends(auth)])
    def contribute_hypothesis(
        session_id: str,
        body: ContributeBody,
        request: Request,
        idempotency_key: Optional[str] = Header(default=None, alias="Idempotency-Key"),
    ):
        cached = idempotent(request, idempotency_key)
        if cached:
            return JSONResponse(cached[1], status_code=cached[0])
        engine = manager.engine_of(session_id)
        if not body.content.strip():
            raise HTTPException(status_code=400, detail="content must be non-empty")
        try:
            hypothesis = engine.contribute_hypothesis(
                body.content, provenance_tag=body.provenance_tag
            )
        except SessionTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        payload = _hypothesis_row(engine, hypothesis)
        remember(request, idempotency_key, 201, payload)
        return JSONResponse(payload, status_code=201)

    @app.post("/v1/sessions/{session_id}/goal-refinements", dependencies=[Depends(auth)])
    def refine_goal(
        session_id: str,
        body: RefineBody,
        request: Request,
        idempotency_key: Optional[str] = Header(default=None, alias="Idempotency-Key"),
    ):
        cached = idempotent(request, idempotency_key)
        if cached:
            return JSONResponse(cached[1], status_code=cached[0])
        engine = manager.engine_of(session_id)
        if not body.text.strip():
            raise HTTPException(status_code=400, detail="refinement text must be non-empty")
        try:
            version = engine.refine_goal(body.text)
        except SessionTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        payload = {"plan_version": version}
        remember(request, idempotency_key, 200, payload)
        return JSONResponse(payload, status_code=200)

    @app.post("/v1/sessions/{session_id}/guidance", dependencies=[Depends(auth)])
    def add_guidance(
        session_id: str,
        body: GuidanceBody,
        request: Request,
        idempotency_key: Optional[str] = Header(default=None, alias="Idempotency-Key"),
    ):
        cached = idempotent(request, idempotency_key)
        if cached:
            return JSONResponse(cached[1], status_code=cached[0])
        engine = manager.engine_of(session_id)
        if not body.text.strip():
            raise HTTPException(status_code=400, detail="guidance text must be non-empty")
        try:
            engine.add_guidance(body.text)
        except SessionTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        payload = {"guidance_count": len(engine.store.guidance)}
        remember(request, idempotency_key, 200, payload)
        return JSONResponse(payload, status_code=200)

    @app.post("/v1/sessions/{session_id}/control", dependencies=[Depends(auth)])
    def control(session_id: str, body: ControlBody):
        engine = manager.engine_of(session_id)
        try:
            phase = engine.control(body.action)
        except SessionTerminal as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"phase": phase.value}

    @app.get("/v1/sessions/{session_id}/events", dependencies=[Depends(auth)])
    def stream_events(
        session_id: str,
        last_seq: int = Query(default=0),
        follow: bool = Query(default=False),
        max_seconds: float = Query(default=30.0),
    ):
        engine = manager.engine_of(session_id)

        def backlog(cursor: int) -> list[ContextMemoryEvent]:
            return [e for e in engine.recent_events if e.seq > cursor]

        def generate():
            cursor = last_seq
            deadline = time.monotonic() + max_seconds
            while True:
                for event in backlog(cursor):
                    cursor = event.seq
                    yield _sse_line(event)
                if not follow:
                    return
                if engine.store.is_terminal() and not backlog(cursor):
                    return
                if time.monotonic() > deadline:
                    return
                time.sleep(0.02)

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/v1/sessions/{session_id}/eval/trend", dependencies=[Depends(auth)])
    def eval_trend(session_id: str):
        engine = manager.engine_of(session_id)
        with engine.lock:
            results = results_from_store(engine.store, include_unmatched=True)
        try:
            rows = temporal_bucket_trend(results)
        except TooFewResults as exc:
            return {"rows": [], "reason": str(exc)}
        return {"rows": [row.model_dump(mode="json") for row in rows]}

    @app.exception_handler(MissingSession)
    def missing_session_handler(request: Request, exc: MissingSession):
        return JSONResponse({"detail": str(exc)}, status_code=404)

    return app
