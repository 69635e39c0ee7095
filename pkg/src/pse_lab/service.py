"""HTTP session API over the experiment protocol.

One running service hosts many independent sessions; calls within a session
are serialized by a per-session lock. Payload validation is manual so error
codes stay on contract: 400 malformed input, 404 unknown session, 409 state
machine violations. Trial responses are appended to the session's log file
as they arrive, so an interrupted service loses at most the in-flight plan.

GET next-trial is idempotent: while a trial is in flight it returns the
same plan again, which is how a disconnected client resumes.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import __version__
from .protocol import (
    IncompleteSessionError,
    IntervalResponse,
    InvalidConfigError,
    NoTrialInFlightError,
    Phase,
    SessionConfig,
    SessionState,
    SessionStore,
    WrongPhaseError,
    create_session,
    new_session_id,
    next_trial,
    session_results,
    submit_response,
)
from .quest import InvalidGridError, InvalidParamsError, NoSolutionError


def _error(status: int, code: str, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": code, "message": message})


@dataclass
class _Entry:
    state: SessionState
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionRegistry:
    """In-memory session table; thread-safe create/get."""

    def __init__(self):
        self._entries: dict[str, _Entry] = {}
        self._lock = threading.Lock()

    def add(self, session_id: str, state: SessionState) -> None:
        with self._lock:
            self._entries[session_id] = _Entry(state=state)

    def get(self, session_id: str) -> _Entry | None:
        with self._lock:
            return self._entries.get(session_id)


def build_app(data_dir: str | None = None) -> FastAPI:
    """App factory; `data_dir` enables on-disk session logs."""
    app = FastAPI(title="pse-lab session service", version=__version__, docs_url=None)
    # the participant UI is typically served from a different origin than
    # the API it drives; sessions carry no credentials, so open CORS is fine
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["GET", "POST"],
        allow_headers=["Content-Type"],
    )
    registry = SessionRegistry()
    store = SessionStore(data_dir) if data_dir is not None else None

    @app.get("/")
    async def root():
        return {"service": "pse-lab", "version": __version__}

    @app.post("/sessions")
    async def create(request: Request):
        try:
            payload = await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError):
            return _error(400, "invalid_json", "request body must be a JSON object")
        if not isinstance(payload, dict):
            return _error(400, "invalid_config", "request body must be a JSON object")
        try:
            config = SessionConfig.from_dict(payload)
            # grid/psychometric degeneracies only surface when the quest
            # states are built, so creation stays inside the 400 mapping
            state = create_session(config)
        except (InvalidConfigError, InvalidParamsError, InvalidGridError,
                NoSolutionError, ValueError, TypeError) as exc:
            return _error(400, "invalid_config", str(exc))
        session_id = new_session_id(config.participant_id)
        if store is not None:
            store.create(session_id, state)
        registry.add(session_id, state)
        return JSONResponse(status_code=201, content={
            "session_id": session_id,
            "participant_id": config.participant_id,
            "curve_order": [c.value for c in state.curves],
            "practice_trials": config.practice_trials,
            "trials_per_curve": config.trials_per_curve,
            "total_main_trials": state.total_main_trials,
        })

    @app.get("/sessions/{session_id}/next-trial")
    async def get_next_trial(session_id: str):
        entry = registry.get(session_id)
        if entry is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with entry.lock:
            if entry.state.pending_trial is not None:
                return entry.state.pending_trial.to_dict()
            try:
                plan = next_trial(entry.state, now=time.time())
            except WrongPhaseError as exc:
                if exc.phase is Phase.REST:
                    return {"phase": "rest",
                            "remaining_rest_s": round(exc.remaining_rest_s or 0.0, 3)}
                return {"phase": "done"}
            return plan.to_dict()

    @app.post("/sessions/{session_id}/responses")
    async def post_response(session_id: str, request: Request):
        entry = registry.get(session_id)
        if entry is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        try:
            payload = await request.json()
        except (json.JSONDecodeError, UnicodeDecodeError):
            return _error(400, "invalid_json", "request body must be a JSON object")
        if not isinstance(payload, dict):
            return _error(400, "invalid_response", "request body must be a JSON object")
        try:
            response = IntervalResponse(payload["response"])
        except (KeyError, ValueError):
            choices = [r.value for r in IntervalResponse]
            return _error(400, "invalid_response", f"response must be one of {choices}")
        latency = payload.get("latency_ms", 0.0)
        if not isinstance(latency, (int, float)) or isinstance(latency, bool) or latency < 0:
            return _error(400, "invalid_response", "latency_ms must be a number >= 0")
        with entry.lock:
            try:
                feedback = submit_response(entry.state, response, float(latency),
                                           now=time.time())
            except NoTrialInFlightError:
                return _error(409, "no_trial_in_flight",
                              "no trial awaiting a response; fetch next-trial first")
            record = entry.state.log[-1]
            if store is not None:
                store.append_record(session_id, record)
        if feedback is None:
            return {"feedback": None}
        return {"feedback": "correct" if feedback else "incorrect"}

    @app.get("/sessions/{session_id}/results")
    async def get_results(session_id: str, partial: bool = False):
        entry = registry.get(session_id)
        if entry is None:
            return _error(404, "unknown_session", f"no session {session_id!r}")
        with entry.lock:
            try:
                results = session_results(entry.state, allow_partial=partial)
            except IncompleteSessionError as exc:
                return _error(409, "incomplete_session", str(exc))
            return {
                "session_id": session_id,
                "participant_id": entry.state.config.participant_id,
                "complete": results.complete,
                "results": {
                    res.curve.value: {
                        "pse_s": res.pse_s,
                        "posterior_sd_s": res.posterior_sd_s,
                        "n_trials": res.n_trials,
                    }
                    for res in results.per_curve.values()
                },
                "n_trials_logged": len(results.log),
            }

    return app
