"""HTTP session service: lifecycle, settings, runs with SSE, clarify,
insights, storytelling.

Run telemetry is one-directional, so events go out over server-sent events;
per-run buffers let a late subscriber replay everything from the start.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel, Field

from . import clarify as clarify_mod
from . import insights as insights_mod
from . import story as story_mod
from .agent import TERMINAL_EVENTS
from .errors import (
    CapyError,
    EnvelopeParseError,
    ExtractionError,
    InvalidAnchor,
    MalformedFile,
    MissingFigure,
    ProviderError,
    StoryParseError,
    TransportError,
    UnknownBlock,
    UnknownCell,
    UnsupportedVersion,
)
from .gateway import ModelRef
from .notebook import parse_notebook, serialize_notebook
from .session import RunActive, Session, Settings, settings_to_dict

log = logging.getLogger(__name__)


class ModelRefModel(BaseModel):
    provider: str
    model_name: str


class SettingsModel(BaseModel):
    eda_mode: str = "single"
    story_mode: str = "single"
    model_by_role: dict[str, ModelRefModel] = Field(default_factory=dict)
    max_rounds: int = Field(default=1, ge=1)
    max_cells: int = Field(default=12, ge=1)
    max_consecutive_error_repairs: int = Field(default=3, ge=1)
    context_budget: int = Field(default=24_000, ge=1)
    timeout_ms: int = Field(default=120_000, ge=1)
    max_annotations_per_block: int = Field(default=2, ge=1)

    def to_settings(self) -> Settings:
        return Settings(
            eda_mode=self.eda_mode,
            story_mode=self.story_mode,
            model_by_role={role: ModelRef(ref.provider, ref.model_name)
                           for role, ref in self.model_by_role.items()},
            max_rounds=self.max_rounds,
            max_cells=self.max_cells,
            max_consecutive_error_repairs=self.max_consecutive_error_repairs,
            context_budget=self.context_budget,
            timeout_ms=self.timeout_ms,
            max_annotations_per_block=self.max_annotations_per_block,
        )


class QueryBody(BaseModel):
    text: str = Field(min_length=1)


class ClarifyBody(BaseModel):
    cell_id: str
    question: str = Field(min_length=1)


class ResolveBody(BaseModel):
    element: str


class StoryBody(BaseModel):
    instructions: str = ""


class FeedbackItemModel(BaseModel):
    scope: str
    text: str
    anchor: Optional[dict] = None


class FeedbackBody(BaseModel):
    items: list[FeedbackItemModel]


class BlocksBody(BaseModel):
    edits: dict[str, str]


_STATUS_BY_ERROR = [
    (RunActive, 409),
    ((UnknownCell, UnknownBlock), 404),
    ((MalformedFile, UnsupportedVersion, InvalidAnchor, MissingFigure), 422),
    ((StoryParseError, ExtractionError, EnvelopeParseError,
      TransportError, ProviderError), 502),
]


def _status_for(exc: Exception) -> int:
    for types, status in _STATUS_BY_ERROR:
        if isinstance(exc, types):
            return status
    return 422 if isinstance(exc, ValueError) else 500


def create_app(state_dir: Optional[str] = None) -> FastAPI:
    app = FastAPI(title="capy session service")
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])
    sessions: dict[str, Session] = {}
    state_path = Path(state_dir or os.environ.get("CAPY_STATE_DIR", "")) \
        if (state_dir or os.environ.get("CAPY_STATE_DIR")) else None

    def persist(session: Session) -> None:
        if state_path is None:
            return
        state_path.mkdir(parents=True, exist_ok=True)
        (state_path / f"{session.id}.ipynb").write_bytes(
            serialize_notebook(session.notebook))
        (state_path / f"{session.id}.state.json").write_text(
            json.dumps(session.to_state(), indent=1), "utf-8")

    def load_persisted() -> None:
        if state_path is None or not state_path.is_dir():
            return
        for state_file in state_path.glob("*.state.json"):
            try:
                state = json.loads(state_file.read_text("utf-8"))
                nb_file = state_path / f"{state['id']}.ipynb"
                nb = parse_notebook(nb_file.read_bytes())
                session = Session.from_state(state, nb)
                sessions[session.id] = session
            except (OSError, ValueError, KeyError, CapyError) as exc:
                log.warning("skipping unreadable session state %s: %s",
                            state_file, exc)

    load_persisted()

    def get_session(session_id: str) -> Session:
        session = sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        return session

    class UnknownSession(CapyError):
        def __init__(self, session_id):
            super().__init__(f"no session {session_id!r}")

    @app.exception_handler(CapyError)
    async def capy_error_handler(_request: Request, exc: CapyError):
        status = 404 if isinstance(exc, UnknownSession) else _status_for(exc)
        return JSONResponse(status_code=status,
                            content={"code": type(exc).__name__,
                                     "message": str(exc)})

    @app.exception_handler(ValueError)
    async def value_error_handler(_request: Request, exc: ValueError):
        return JSONResponse(status_code=422,
                            content={"code": "ValueError", "message": str(exc)})

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.body()
        nb = parse_notebook(body) if body else None
        session = Session(notebook=nb)
        sessions[session.id] = session
        persist(session)
        return {"id": session.id}

    @app.get("/sessions/{session_id}/settings")
    def get_settings(session_id: str):
        return settings_to_dict(get_session(session_id).settings)

    @app.put("/sessions/{session_id}/settings")
    def put_settings(session_id: str, body: SettingsModel):
        session = get_session(session_id)
        session.apply_settings(body.to_settings())
        persist(session)
        return settings_to_dict(session.settings)

    @app.get("/sessions/{session_id}/notebook")
    def get_notebook(session_id: str):
        payload = serialize_notebook(get_session(session_id).notebook)
        return Response(content=payload, media_type="application/json")

    @app.post("/sessions/{session_id}/query", status_code=202)
    def post_query(session_id: str, body: QueryBody):
        session = get_session(session_id)
        session.start_run(body.text)
        return {"status": "started"}

    @app.delete("/sessions/{session_id}/query")
    def delete_query(session_id: str):
        session = get_session(session_id)
        session.stop_run()
        return {"status": "stopping"}

    @app.get("/sessions/{session_id}/events")
    def get_events(session_id: str):
        session = get_session(session_id)

        def stream():
            index = 0
            while True:
                events = session.events_since(index, timeout=10.0)
                for event in events:
                    yield f"data: {json.dumps(event)}\n\n"
                    if event["kind"] in TERMINAL_EVENTS:
                        persist(session)
                        return
                index += len(events)
                if not events and session.run_state == "idle":
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.post("/sessions/{session_id}/clarify")
    def post_clarify(session_id: str, body: ClarifyBody):
        session = get_session(session_id)
        answer = clarify_mod.ask(session.notebook, session.threads,
                                 body.cell_id, body.question, session.gateway)
        persist(session)
        return {"answer": answer}

    @app.post("/sessions/{session_id}/insights")
    def post_insights(session_id: str):
        session = get_session(session_id)
        graph = insights_mod.extract_graph(session.notebook, session.gateway)
        return {"graph": insights_mod.graph_to_json(graph),
                "mermaid": insights_mod.to_mermaid(graph)}

    @app.post("/sessions/{session_id}/insights/resolve")
    def post_resolve(session_id: str, body: ResolveBody):
        session = get_session(session_id)
        cell_id = insights_mod.resolve_cell(None, body.element,
                                            session.notebook, session.gateway)
        return {"cell_id": cell_id}

    @app.post("/sessions/{session_id}/story")
    def post_story(session_id: str, body: StoryBody):
        session = get_session(session_id)
        if session.run_state != "idle":
            raise RunActive("cannot generate a story during a run")
        story, transcript = story_mod.generate_story(
            session.notebook, body.instructions, session.settings.story_mode,
            session.gateway, max_rounds=session.settings.max_rounds,
            max_annotations_per_block=session.settings.max_annotations_per_block)
        session.story = story
        persist(session)
        result = story_mod.story_to_json(story)
        if transcript is not None:
            result["degraded"] = transcript.degraded
            result["wave_count"] = transcript.wave_count
        return result

    @app.post("/sessions/{session_id}/story/feedback")
    def post_feedback(session_id: str, body: FeedbackBody):
        session = get_session(session_id)
        if session.story is None:
            raise UnknownBlock("no story generated yet")
        items = [story_mod.Feedback(scope=i.scope, text=i.text, anchor=i.anchor)
                 for i in body.items]
        session.story = story_mod.apply_feedback(
            session.story, items, session.notebook, session.gateway,
            max_annotations_per_block=session.settings.max_annotations_per_block)
        persist(session)
        return story_mod.story_to_json(session.story)

    @app.put("/sessions/{session_id}/story/blocks")
    def put_blocks(session_id: str, body: BlocksBody):
        session = get_session(session_id)
        if session.story is None:
            raise UnknownBlock("no story generated yet")
        session.story = story_mod.update_blocks(session.story, body.edits)
        persist(session)
        return story_mod.story_to_json(session.story)

    @app.get("/sessions/{session_id}/story/export.html")
    def export_story(session_id: str):
        session = get_session(session_id)
        if session.story is None:
            raise UnknownBlock("no story generated yet")
        payload = story_mod.export_html(session.story, session.notebook)
        return Response(content=payload, media_type="text/html")

    return app


def main() -> None:
    import uvicorn
    addr = os.environ.get("CAPY_LISTEN_ADDR", "127.0.0.1:8787")
    host, _, port = addr.rpartition(":")
    uvicorn.run(create_app(), host=host or "127.0.0.1", port=int(port or 8787))


if __name__ == "__main__":
    main()
