"""HTTP annotation service: serves the live annotation queue, session status,
and iteration history to browser consoles while the correction engine runs in
a background thread.

Endpoints (JSON over HTTP, versioned under /api):
    GET  /api/health    liveness
    GET  /api/session   engine status and batch progress
    GET  /api/next      lease the next annotation request (204 when none)
    POST /api/annotate  submit one label (409 duplicate, 404 unknown id)
    GET  /api/history   iteration records to date

The engine never shares the same unleased request with two annotators, and
each flagged id accepts exactly one response.
"""

from __future__ import annotations

import json
import threading
import traceback
from pathlib import Path

from fastapi import FastAPI, Header, HTTPException, Query, Request
from fastapi.responses import HTMLResponse, JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .annotator import AnnotationQueue, DuplicateAnnotation, QueueAnnotator
from .data import DataError, Dataset, TaskKind
from .engine import EngineConfig, run_until_stop


class AnnotationBody(BaseModel):
    example_id: str
    label: str | list[str]
    annotator: str | None = None


class ServeSession:
    """One correction run exposed over HTTP.

    The engine thread blocks on the annotation queue between training rounds;
    ``status`` distinguishes "training" from "annotating" so the console can
    show why the queue is empty.
    """

    def __init__(self, dataset: Dataset, test: Dataset, config: EngineConfig,
                 run_dir=None, tokens=(), lease_timeout: float = 600.0,
                 console_dir=None):
        self.dataset = dataset
        self.test = test
        self.config = config
        self.run_dir = Path(run_dir) if run_dir else None
        self.tokens = set(tokens)
        self.console_dir = Path(console_dir) if console_dir else None
        self.queue = AnnotationQueue(lease_timeout=lease_timeout)
        self.status = "training"
        self.stopped_by: str | None = None
        self.error: str | None = None
        self.result = None
        self._thread: threading.Thread | None = None
        self._lock = threading.Lock()
        self._records: list[dict] = []
        self._live_state = None

    def _set_status(self, status: str) -> None:
        with self._lock:
            self.status = status
            self._records = [r.to_dict() for r in self._state_records()]

    def _state_records(self):
        if self.result is not None:
            return self.result.records
        return self._live_state.records if self._live_state else []

    def start(self) -> None:
        from .engine import EngineState

        annotator = QueueAnnotator(self.queue, on_status=self._set_status)
        self._live_state = EngineState()

        def _run():
            try:
                self.result = run_until_stop(self.dataset, self.test, annotator,
                                             self.config, run_dir=self.run_dir,
                                             state=self._live_state)
                self.stopped_by = self.result.stopped_by
                self._set_status("done")
            except Exception as err:   # surfaced through /api/session
                self.error = f"{type(err).__name__}: {err}"
                traceback.print_exc()
                self._set_status("error")
            finally:
                self.queue.close()

        self._thread = threading.Thread(target=_run, daemon=True, name="alc3-engine")
        self._thread.start()

    def records(self) -> list[dict]:
        with self._lock:
            current = [r.to_dict() for r in self._state_records()]
            if len(current) >= len(self._records):
                self._records = current
            return list(self._records)

    def session_info(self) -> dict:
        info = {
            "status": self.status,
            "strategy": self.config.strategy.value,
            "dataset": self.dataset.name,
            "dataset_size": len(self.dataset),
            "task_kind": self.dataset.label_space.task_kind.value,
            "labels": list(self.dataset.label_space.labels),
            "M": self.config.M,
            "max_iterations": self.config.max_iterations,
            "completed_iterations": len(self.records()),
            "stopped_by": self.stopped_by,
            "error": self.error,
        }
        info.update(self.queue.progress())
        return info


_FALLBACK_CONSOLE = """<!doctype html>
<html><head><meta charset="utf-8"><title>alc3 console</title></head>
<body>
<h1>alc3 annotation service</h1>
<p>No web console build found. The JSON API is live under <code>/api</code>:
<a href="/api/session">/api/session</a>, <a href="/api/history">/api/history</a>.</p>
<p>Build the console (see <code>frontend/</code>) and pass its dist directory
via <code>--console-dir</code>.</p>
</body></html>
"""


def create_app(session: ServeSession) -> FastAPI:
    app = FastAPI(title="alc3 annotation service")

    def _annotator_id(request: Request, explicit: str | None) -> str:
        auth = request.headers.get("authorization", "")
        token = auth.removeprefix("Bearer ").strip() if auth.startswith("Bearer ") else None
        if session.tokens:
            if token not in session.tokens:
                raise HTTPException(status_code=401, detail="missing or unknown annotator token")
            return explicit or token
        return explicit or token or "anonymous"

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/session")
    def session_info():
        return session.session_info()

    @app.get("/api/history")
    def history():
        return session.records()

    @app.get("/api/next")
    def next_request(request: Request, annotator: str | None = Query(default=None)):
        annotator_id = _annotator_id(request, annotator)
        leased = session.queue.lease(annotator_id)
        if leased is None:
            return Response(status_code=204)
        payload = leased.to_dict()
        payload["lease_timeout"] = session.queue.lease_timeout
        payload["annotator"] = annotator_id
        return JSONResponse(payload)

    @app.post("/api/annotate")
    def annotate(body: AnnotationBody, request: Request):
        annotator_id = _annotator_id(request, body.annotator)
        label = tuple(body.label) if isinstance(body.label, list) else body.label
        space = session.dataset.label_space
        if not space.contains(label):
            raise HTTPException(status_code=400, detail=f"label {body.label!r} not in label space")
        if space.task_kind is TaskKind.SEQUENCE_LABELING:
            try:
                expected = len(session.dataset.get(body.example_id).input)
            except DataError:
                raise HTTPException(status_code=404, detail=f"unknown example {body.example_id!r}")
            if len(label) != expected:
                raise HTTPException(status_code=400,
                                    detail=f"label length {len(label)} != token count {expected}")
        try:
            response = session.queue.submit(body.example_id, label, annotator_id)
        except KeyError:
            raise HTTPException(status_code=404,
                                detail=f"example {body.example_id!r} is not in the active batch")
        except DuplicateAnnotation:
            raise HTTPException(status_code=409,
                                detail=f"example {body.example_id!r} already annotated")
        progress = session.queue.progress()
        return {"accepted": response.to_dict(), "progress": progress}

    if session.console_dir is not None and session.console_dir.is_dir():
        app.mount("/", StaticFiles(directory=session.console_dir, html=True), name="console")
    else:
        @app.get("/", response_class=HTMLResponse)
        def console_placeholder():
            return _FALLBACK_CONSOLE

    return app


def serve(session: ServeSession, host: str = "127.0.0.1", port: int = 8765) -> None:
    """Run the service until the process is stopped (blocking)."""
    import uvicorn

    session.start()
    app = create_app(session)
    uvicorn.run(app, host=host, port=port, log_level="info")
