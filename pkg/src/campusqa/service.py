"""HTTP JSON API over the engine.

All errors come back as {"code": ..., "message": ...}; admin endpoints
(ingest, sync) optionally require an X-Admin-Token header. Endpoint
shapes are documented in docs/http-api.md.
"""
from __future__ import annotations

import threading
import uuid
from dataclasses import asdict
from typing import Optional

from fastapi import FastAPI, Header, Query, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .engine import Engine
from .ingest import CsvFormatError, IngestError
from .retriever import ScoredDoc
from .syncpipe import SyncBusy, SyncError

MAX_MESSAGE_BYTES = 4096

_STATUS_CODES = {
    400: "bad_request",
    401: "unauthorized",
    404: "not_found",
    409: "conflict",
    413: "too_large",
    500: "internal_error",
    503: "unavailable",
}


class ApiError(Exception):
    def __init__(self, status: int, message: str, code: str | None = None):
        super().__init__(message)
        self.status = status
        self.message = message
        self.code = code or _STATUS_CODES.get(status, "error")


class ChatRequest(BaseModel):
    session_id: Optional[str] = None
    message: str = ""


def _hit_payload(hit: ScoredDoc, explain: bool) -> dict:
    payload = {"id": hit.id, "document": hit.document, "combined": hit.combined}
    if explain:
        payload.update(
            bm25_raw=hit.bm25_raw,
            bm25_norm=hit.bm25_norm,
            distance=hit.distance,
            similarity=hit.similarity,
        )
    return payload


class _Jobs:
    def __init__(self):
        self._lock = threading.Lock()
        self._jobs: dict[str, dict] = {}

    def start(self, target) -> str:
        job_id = uuid.uuid4().hex
        with self._lock:
            self._jobs[job_id] = {"id": job_id, "status": "running", "result": None, "error": None}

        def run():
            try:
                result = target()
                with self._lock:
                    self._jobs[job_id].update(status="done", result=result)
            except Exception as exc:
                with self._lock:
                    self._jobs[job_id].update(status="failed", error=str(exc))

        threading.Thread(target=run, daemon=True).start()
        return job_id

    def get(self, job_id: str) -> dict | None:
        with self._lock:
            job = self._jobs.get(job_id)
            return dict(job) if job else None


def create_app(engine: Engine) -> FastAPI:
    app = FastAPI(title="campusqa", docs_url=None, redoc_url=None)
    jobs = _Jobs()

    if engine.config.server.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(engine.config.server.cors_origins),
            allow_methods=["*"],
            allow_headers=["*"],
        )

    @app.exception_handler(ApiError)
    async def api_error_handler(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status, content={"code": exc.code, "message": exc.message})

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"code": "bad_request", "message": str(exc.errors()[:1])})

    @app.exception_handler(Exception)
    async def fallback_handler(request: Request, exc: Exception):
        return JSONResponse(status_code=500, content={"code": "internal_error", "message": "unexpected server error"})

    def require_admin(token: str | None) -> None:
        expected = engine.config.server.admin_token
        if expected and token != expected:
            raise ApiError(401, "missing or invalid admin token")

    @app.post("/chat")
    def chat(body: ChatRequest):
        message = body.message.strip()
        if not message:
            raise ApiError(400, "message must be non-empty")
        if len(body.message.encode("utf-8")) > MAX_MESSAGE_BYTES:
            raise ApiError(400, f"message exceeds {MAX_MESSAGE_BYTES} bytes")
        try:
            session_id, result = engine.chat_turn(body.session_id, message)
        except KeyError:
            raise ApiError(404, f"unknown session {body.session_id!r}")
        if not result.ok:
            raise ApiError(503, result.reply, code="llm_unavailable")
        return {
            "session_id": session_id,
            "reply": result.reply,
            "sources": [ref.as_dict() for ref in result.sources],
        }

    @app.get("/search")
    def search(
        q: str = Query(default=""),
        k: int = Query(default=5),
        explain: bool = Query(default=False),
        fusion_lambda: float | None = Query(default=None, alias="lambda"),
    ):
        if k < 1:
            raise ApiError(400, "k must be at least 1")
        if fusion_lambda is not None and not 0.0 <= fusion_lambda <= 1.0:
            raise ApiError(400, "lambda must be within [0, 1]")
        hits = engine.search(q, k=k, lam=fusion_lambda)
        return [_hit_payload(h, explain) for h in hits]

    @app.post("/ingest/csv")
    async def ingest_csv(
        request: Request,
        table: str = Query(...),
        key: str = Query(...),
        x_admin_token: str | None = Header(default=None),
    ):
        require_admin(x_admin_token)
        natural_key = [c.strip() for c in key.split(",") if c.strip()]
        data = await request.body()
        try:
            stats = engine.ingest_csv_bytes(data, table, natural_key)
        except (CsvFormatError, IngestError) as exc:
            raise ApiError(400, str(exc))
        return asdict(stats)

    @app.post("/ingest/web")
    async def ingest_web(request: Request, x_admin_token: str | None = Header(default=None)):
        require_admin(x_admin_token)
        text = (await request.body()).decode("utf-8", errors="replace")
        outcomes = engine.ingest_url_text(text)
        return [
            {
                "url": o.url,
                "ok": o.ok,
                "changed": o.outcome.changed if o.outcome else None,
                "version": o.outcome.version if o.outcome else None,
                "error": o.error,
            }
            for o in outcomes
        ]

    @app.post("/sync")
    def sync(
        background: bool = Query(default=False),
        x_admin_token: str | None = Header(default=None),
    ):
        require_admin(x_admin_token)
        if engine.syncer.busy:
            raise ApiError(409, "a sync job is already running")
        if background:
            job_id = jobs.start(lambda: engine.sync().as_dict())
            return JSONResponse(status_code=202, content={"job_id": job_id})
        try:
            stats = engine.sync()
        except SyncBusy:
            raise ApiError(409, "a sync job is already running")
        except SyncError as exc:
            raise ApiError(503, str(exc))
        return stats.as_dict()

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = jobs.get(job_id)
        if job is None:
            raise ApiError(404, f"unknown job {job_id!r}")
        return job

    @app.get("/healthz")
    def healthz():
        return engine.health()

    return app
