"""HTTP service: query sessions, evidence cards, feedback, metrics.

The service shares the CLI's pipeline, so identical (bundle, query,
fixture) inputs produce identical Answer JSON over both surfaces. A session
pins its patient snapshot at creation; queries within a session are
serialized. Blocked answers are ordinary 200 responses — the block reason
is data, not an HTTP failure.
"""

from __future__ import annotations

import json
import queue
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .analytics import feedback_summary
from .errors import (
    ChartCiteError,
    DanglingCitation,
    EmptyQuery,
    GatewayError,
    UnknownPatient,
)
from .llm import LlmBackend
from .pipeline import run_query
from .records import FilterCriteria, RecordStore, Snapshot
from .synthesis import Answer, evidence_card
from .verifier import MonitorReport


@dataclass
class InteractionRecord:
    query: str
    plan: dict[str, Any]
    answer_id: str
    started_at: str
    finished_at: str


@dataclass
class Session:
    id: str
    patient_id: str
    criteria: FilterCriteria
    snapshot: Snapshot
    log: list[InteractionRecord] = field(default_factory=list)
    answers: dict[str, Answer] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


@dataclass
class FeedbackRecord:
    session_id: str
    answer_id: str
    rating: int
    text: str | None
    timestamp: str


class Engine:
    """Application state shared by every request."""

    def __init__(self, store: RecordStore, backend_factory: Callable[[], LlmBackend],
                 strict: bool = True) -> None:
        self.store = store
        self.backend_factory = backend_factory
        self.strict = strict
        self.sessions: dict[str, Session] = {}
        self.feedback: list[FeedbackRecord] = []
        self.query_count = 0
        self.monitor_report: MonitorReport | None = None
        self._lock = threading.Lock()

    def create_session(self, patient_id: str, criteria: FilterCriteria) -> Session:
        snapshot = self.store.prefetch(patient_id)
        session = Session(id=uuid.uuid4().hex, patient_id=patient_id,
                          criteria=criteria, snapshot=snapshot)
        with self._lock:
            self.sessions[session.id] = session
        return session

    def count_query(self) -> None:
        with self._lock:
            self.query_count += 1


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _error(status: int, name: str, detail: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": name, "detail": detail})


def create_app(engine: Engine, api_token: str | None = None) -> FastAPI:
    app = FastAPI(title="chartcite", docs_url=None, redoc_url=None)
    app.add_middleware(CORSMiddleware, allow_origins=["*"], allow_methods=["*"],
                       allow_headers=["*"])

    @app.middleware("http")
    async def _auth(request: Request, call_next):
        if api_token and request.headers.get("Authorization") != f"Bearer {api_token}":
            return _error(401, "Unauthorized", "missing or invalid bearer token")
        return await call_next(request)

    def _session_or_none(session_id: str) -> Session | None:
        return engine.sessions.get(session_id)

    @app.post("/sessions")
    async def create_session(request: Request) -> Response:
        body = await request.json()
        patient_id = body.get("patient_id")
        if not isinstance(patient_id, str) or not patient_id:
            return _error(400, "BadRequest", "patient_id is required")
        try:
            criteria = FilterCriteria.from_dict(body.get("criteria") or {})
        except (ValueError, KeyError) as exc:
            return _error(400, "BadCriteria", str(exc))
        try:
            session = engine.create_session(patient_id, criteria)
        except UnknownPatient:
            return _error(404, "UnknownPatient", patient_id)
        return JSONResponse(status_code=201, content={"session_id": session.id})

    def _execute_query(session: Session, text: str, format_tag: str, on_event=None):
        backend = engine.backend_factory()
        started = _now()
        result = run_query(
            session.snapshot, text, session.criteria, backend,
            format_tag=format_tag, strict=engine.strict,
            known_patient_ids=engine.store.patients(), on_event=on_event,
        )
        session.answers[result.answer.id] = result.answer
        session.log.append(InteractionRecord(
            query=text, plan=result.plan.to_dict(), answer_id=result.answer.id,
            started_at=started, finished_at=_now(),
        ))
        engine.count_query()
        return result

    @app.post("/sessions/{session_id}/query")
    async def post_query(session_id: str, request: Request) -> Response:
        session = _session_or_none(session_id)
        if session is None:
            return _error(404, "UnknownSession", session_id)
        body = await request.json()
        text = body.get("text")
        if not isinstance(text, str) or not text.strip():
            return _error(422, "EmptyQuery", "query text is empty")
        format_tag = body.get("format_tag") or "summary"
        if request.query_params.get("progress"):
            return StreamingResponse(_progress_stream(session, text, format_tag),
                                     media_type="application/x-ndjson")
        try:
            with session.lock:
                result = _execute_query(session, text, format_tag)
        except EmptyQuery as exc:
            return _error(422, "EmptyQuery", str(exc))
        except (GatewayError, ChartCiteError) as exc:
            return _error(502, type(exc).__name__, str(exc))
        return JSONResponse(status_code=200, content=result.answer.to_dict())

    def _progress_stream(session: Session, text: str, format_tag: str):
        events: queue.Queue = queue.Queue()

        def on_event(kind, status):
            events.put({"event": kind, **status.to_dict()})

        def work():
            try:
                with session.lock:
                    result = _execute_query(session, text, format_tag, on_event=on_event)
                events.put({"event": "answer", "answer": result.answer.to_dict()})
            except Exception as exc:
                events.put({"event": "error", "error": type(exc).__name__, "detail": str(exc)})
            events.put(None)

        threading.Thread(target=work, daemon=True).start()
        while True:
            item = events.get()
            if item is None:
                break
            yield json.dumps(item, ensure_ascii=False) + "\n"

    @app.get("/sessions/{session_id}/evidence/{answer_id}/{claim_idx}/{cite_idx}")
    async def get_evidence(session_id: str, answer_id: str, claim_idx: int, cite_idx: int) -> Response:
        session = _session_or_none(session_id)
        if session is None:
            return _error(404, "UnknownSession", session_id)
        answer = session.answers.get(answer_id)
        if answer is None:
            return _error(404, "UnknownAnswer", answer_id)
        if not 0 <= claim_idx < len(answer.claims):
            return _error(404, "UnknownClaim", str(claim_idx))
        claim = answer.claims[claim_idx]
        if not 0 <= cite_idx < len(claim.citations):
            return _error(404, "UnknownCitation", str(cite_idx))
        try:
            card = evidence_card(claim.citations[cite_idx], session.snapshot)
        except (DanglingCitation, ChartCiteError) as exc:
            return _error(404, type(exc).__name__, str(exc))
        return JSONResponse(status_code=200, content=card.to_dict())

    @app.post("/feedback")
    async def post_feedback(request: Request) -> Response:
        body = await request.json()
        rating = body.get("rating")
        if not isinstance(rating, int) or isinstance(rating, bool) or not 1 <= rating <= 5:
            return _error(400, "BadRating", f"rating must be an integer 1..5, got {rating!r}")
        session = _session_or_none(body.get("session_id", ""))
        if session is None:
            return _error(404, "UnknownSession", str(body.get("session_id")))
        answer_id = body.get("answer_id", "")
        if answer_id not in session.answers:
            return _error(404, "UnknownAnswer", str(answer_id))
        engine.feedback.append(FeedbackRecord(
            session_id=session.id, answer_id=answer_id, rating=rating,
            text=body.get("text"), timestamp=_now(),
        ))
        return Response(status_code=204)

    @app.get("/metrics")
    async def get_metrics() -> Response:
        summary = feedback_summary([f.rating for f in engine.feedback])
        return JSONResponse(status_code=200, content={
            "query_count": engine.query_count,
            "feedback_summary": summary.to_dict(),
            "monitor_report": engine.monitor_report.to_dict() if engine.monitor_report else None,
        })

    @app.post("/uploads")
    async def post_upload(request: Request) -> Response:
        # Stub: the UI's file picker posts here; ingestion is a CLI concern.
        await request.body()
        return JSONResponse(status_code=202, content={"status": "accepted", "processed": False})

    return app
