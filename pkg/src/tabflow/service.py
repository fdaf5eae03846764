"""HTTP service: table upload, reasoning sessions, step streaming, assets.

JSON API over the engine. Sessions run on worker threads; step events stream
to clients over server-sent events and are replayable from the persisted
record afterwards.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path
from typing import Iterator, Optional

from fastapi import FastAPI, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse, Response, StreamingResponse
from pydantic import BaseModel, Field

from .backend import ScriptedBackend
from .config import ConfigError, EngineConfig
from .orchestrator import Mode, SessionInput, TableRef, run_session, step_to_dict
from .store import SessionStore, TableRejected, TableStore, UnknownId
from .sensing import metadata_to_dict


class SessionRequest(BaseModel):
    table_ids: list[str] = Field(min_length=1)
    question: str = Field(min_length=1)
    mode: str = "icot"
    max_steps: int = 8


class _LiveSession:
    """Mutable view of a running session, safe to poll from request threads."""

    def __init__(self, session_id: str):
        self.id = session_id
        self.steps: list[dict] = []
        self.status = "running"
        self.final: Optional[dict] = None
        self.cond = threading.Condition()

    def append(self, step_dict: dict) -> None:
        with self.cond:
            self.steps.append(step_dict)
            self.cond.notify_all()

    def finish(self, status: str, final: Optional[dict]) -> None:
        with self.cond:
            self.status = status
            self.final = final
            self.cond.notify_all()

    def wait_progress(self, seen: int, timeout: float = 30.0) -> None:
        with self.cond:
            if len(self.steps) > seen or self.status != "running":
                return
            self.cond.wait(timeout)


def create_app(config: EngineConfig) -> FastAPI:
    config.validate()
    app = FastAPI(title="tabflow", version="0.1.0")
    data_dir = Path(config.data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    tables = TableStore(data_dir)
    sessions = SessionStore(data_dir)
    sandbox = config.make_sandbox()
    tools = config.make_tools(sandbox)
    profiles = config.make_profiles()
    live: dict[str, _LiveSession] = {}
    live_lock = threading.Lock()

    @app.exception_handler(UnknownId)
    async def _unknown(_request: Request, exc: UnknownId):
        return JSONResponse(status_code=404, content={"detail": str(exc)})

    @app.post("/v1/tables")
    async def upload_table(file: UploadFile):
        data = await file.read()
        try:
            record = tables.add(data, name=file.filename or "table")
        except TableRejected as exc:
            detail: dict = {"error": str(exc)}
            if exc.report is not None:
                detail["violations"] = [
                    {"rule_id": v.rule_id, "message": v.message}
                    for v in exc.report.violations
                ]
            raise HTTPException(status_code=400, detail=detail)
        return {"table_id": record.id, "metadata": metadata_to_dict(record.metadata)}

    @app.post("/v1/sessions")
    def create_session(request: SessionRequest):
        try:
            mode = Mode(request.mode.lower())
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown mode {request.mode!r}")
        refs = []
        for table_id in request.table_ids:
            record = tables.get(table_id)  # raises UnknownId -> 404
            refs.append(
                TableRef(
                    name=record.name,
                    metadata=record.metadata,
                    csv_path=record.processed_path,
                )
            )
        with live_lock:
            running = sum(1 for s in live.values() if s.status == "running")
            if running >= config.max_sessions:
                raise HTTPException(status_code=503, detail="session capacity saturated")
            if not config.backend_configured:
                raise HTTPException(status_code=502, detail="no model backend configured")
            try:
                backend = config.make_backend()
            except ConfigError as exc:
                raise HTTPException(status_code=502, detail=str(exc))
            session_id = sessions.new_id()
            state = _LiveSession(session_id)
            live[session_id] = state
        session = SessionInput(
            query=request.question,
            tables=refs,
            mode=mode,
            max_steps=request.max_steps,
            artifact_dir=sessions.assets_dir(session_id),
        )
        script = backend.script_dict() if isinstance(backend, ScriptedBackend) else None

        def _run() -> None:
            try:
                trace = run_session(
                    session,
                    backend,
                    tools,
                    profiles=profiles,
                    on_step=lambda step: state.append(step_to_dict(step)),
                )
            except Exception as exc:  # defensive: never leave a session hanging
                state.finish("backend_failure", {"error": str(exc)})
                return
            record = sessions.record_from_trace(session_id, trace, backend_script=script)
            sessions.save(record)
            final = record.trace.get("final")
            state.finish(trace.status.value, final)

        threading.Thread(target=_run, name=f"session-{session_id}", daemon=True).start()
        return {"session_id": session_id}

    @app.get("/v1/sessions/{session_id}")
    def get_session(session_id: str):
        with live_lock:
            state = live.get(session_id)
        if state is not None and state.status == "running":
            return {
                "id": session_id,
                "status": "running",
                "steps": list(state.steps),
                "final": None,
            }
        try:
            record = sessions.get(session_id)
        except UnknownId:
            # A session that died before persisting still has its live view.
            if state is not None:
                return {
                    "id": session_id,
                    "status": state.status,
                    "steps": list(state.steps),
                    "final": state.final,
                }
            raise
        return record.to_dict()

    @app.get("/v1/sessions/{session_id}/events")
    def session_events(session_id: str, request: Request, from_index: int = 0):
        with live_lock:
            state = live.get(session_id)
        resume_raw = request.headers.get("last-event-id")
        start = from_index
        if resume_raw:
            try:
                start = max(start, int(resume_raw))
            except ValueError:
                pass
        if state is None:
            record = sessions.get(session_id)  # raises UnknownId -> 404
            return StreamingResponse(
                _replay_events(record.trace, start), media_type="text/event-stream"
            )
        return StreamingResponse(
            _live_events(state, start), media_type="text/event-stream"
        )

    def _format_event(index: int, event: str, data: dict) -> str:
        return f"id: {index}\nevent: {event}\ndata: {json.dumps(data, ensure_ascii=False)}\n\n"

    def _replay_events(trace: dict, start: int) -> Iterator[str]:
        steps = trace.get("steps", [])
        for step in steps[start:]:
            yield _format_event(step["index"], "step", step)
        yield _format_event(
            len(steps) + 1,
            "final",
            {"status": trace.get("status"), "final": trace.get("final")},
        )

    def _live_events(state: _LiveSession, start: int) -> Iterator[str]:
        seen = start
        while True:
            with state.cond:
                steps = list(state.steps)
                status = state.status
                final = state.final
            while seen < len(steps):
                yield _format_event(steps[seen]["index"], "step", steps[seen])
                seen += 1
            if status != "running":
                yield _format_event(seen + 1, "final", {"status": status, "final": final})
                return
            state.wait_progress(seen)

    @app.get("/v1/assets/{asset_path:path}")
    def get_asset(asset_path: str):
        root = data_dir.resolve()
        target = (root / asset_path).resolve()
        if not str(target).startswith(str(root)) or not target.is_file():
            raise HTTPException(status_code=404, detail="asset not found")
        media = "image/svg+xml" if target.suffix == ".svg" else "application/octet-stream"
        return Response(content=target.read_bytes(), media_type=media)

    @app.get("/v1/health")
    def health():
        report = sandbox.health_check()
        return {
            "ok": report.ok,
            "sandbox": {
                "ok": report.ok,
                "version": report.version,
                "network_blocked": report.network_blocked,
            },
            "backend_configured": config.backend_configured,
        }

    return app
