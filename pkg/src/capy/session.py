"""Session state: one notebook, settings, threads, story, and one run at a time.

The session is the single-writer handle for everything mutable; readers take
snapshots. Run events are buffered per run so late subscribers can replay them.
"""

from __future__ import annotations

import threading
import time
import uuid
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

from . import agent
from .agent import LoopBudget, LoopEvent, TERMINAL_EVENTS
from .clarify import ClarifyThread, ClarifyTurn
from .errors import CapyError
from .executor import Executor
from .gateway import CallLedger, Gateway, ModelRef
from .notebook import Notebook
from .story import Annotation, Block, StoryDocument

ALL_ROLES = ("initial_respondent", "refiner", "critic_plan", "critic_code",
             "critic_visualization", "critic_interpretation", "critic_semantic",
             "critic_rhetorical", "critic_pragmatic")

HEARTBEAT_INTERVAL_S = 2.0


class RunActive(CapyError):
    """A conflicting mutation arrived while a run is in flight."""


@dataclass
class Settings:
    eda_mode: str = "single"
    story_mode: str = "single"
    model_by_role: dict[str, ModelRef] = field(default_factory=dict)
    max_rounds: int = 1
    max_cells: int = 12
    max_consecutive_error_repairs: int = 3
    context_budget: int = 24_000
    timeout_ms: int = 120_000
    max_annotations_per_block: int = 2

    def __post_init__(self):
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be >= 1")
        if self.eda_mode not in ("single", "multi") \
                or self.story_mode not in ("single", "multi"):
            raise ValueError("modes must be 'single' or 'multi'")

    def budget(self) -> LoopBudget:
        return LoopBudget(max_cells=self.max_cells,
                          max_consecutive_error_repairs=self.max_consecutive_error_repairs,
                          context_budget=self.context_budget)

    @classmethod
    def scripted(cls, transcript_path: str, **overrides) -> "Settings":
        """All roles driven by one sequential transcript; the test workhorse."""
        models = {role: ModelRef("scripted", transcript_path)
                  for role in ALL_ROLES}
        return cls(model_by_role=models, **overrides)


def settings_to_dict(settings: Settings) -> dict:
    data = asdict(settings)
    data["model_by_role"] = {role: {"provider": ref.provider,
                                    "model_name": ref.model_name}
                             for role, ref in settings.model_by_role.items()}
    return data


def settings_from_dict(data: dict) -> Settings:
    known = {f.name for f in fields(Settings)}
    kwargs = {k: v for k, v in data.items() if k in known}
    kwargs["model_by_role"] = {
        role: ModelRef(ref["provider"], ref["model_name"])
        for role, ref in data.get("model_by_role", {}).items()}
    return Settings(**kwargs)


class Session:
    def __init__(self, notebook: Optional[Notebook] = None,
                 settings: Optional[Settings] = None,
                 session_id: Optional[str] = None):
        self.id = session_id or uuid.uuid4().hex
        self.notebook = notebook or Notebook()
        self.settings = settings or Settings()
        self.threads: dict[str, ClarifyThread] = {}
        self.story: Optional[StoryDocument] = None
        self.run_state = "idle"  # idle | running | stopping
        self.stop_event = threading.Event()
        self.lock = threading.RLock()
        self.last_transcript = None
        self.events: list[dict] = []
        self._events_cond = threading.Condition()
        self._run_thread: Optional[threading.Thread] = None
        self._executor: Optional[Executor] = None
        self._gateway: Optional[Gateway] = None

    @property
    def gateway(self) -> Gateway:
        if self._gateway is None:
            self._gateway = Gateway(self.settings.model_by_role)
        return self._gateway

    @property
    def ledger(self) -> CallLedger:
        return self.gateway.ledger

    @property
    def executor(self) -> Executor:
        if self._executor is None:
            self._executor = Executor()
        return self._executor

    def apply_settings(self, settings: Settings) -> None:
        with self.lock:
            if self.run_state != "idle":
                raise RunActive("cannot change settings during a run")
            self.settings = settings
            self._gateway = None  # rebuilt with the new model map

    # -- run lifecycle ----------------------------------------------------

    def _publish(self, event: dict) -> None:
        with self._events_cond:
            event["seq"] = len(self.events)
            self.events.append(event)
            self._events_cond.notify_all()

    def start_run(self, query: str) -> None:
        with self.lock:
            if self.run_state != "idle":
                raise RunActive("a run is already active")
            self.run_state = "running"
            self.stop_event.clear()
            self.events = []
        mode = self.settings.eda_mode

        def worker():
            terminal_seen = False
            try:
                for event in agent.run_query(self, query, mode,
                                             self.settings.budget()):
                    self._publish({"kind": event.kind, **event.payload})
                    if event.kind in TERMINAL_EVENTS:
                        terminal_seen = True
            except Exception as exc:  # defensive: the stream must terminate
                if not terminal_seen:
                    self._publish({"kind": "loop_failed",
                                   "reason": "internal_error",
                                   "error": str(exc)})
            finally:
                with self.lock:
                    self.run_state = "idle"

        self._run_thread = threading.Thread(target=worker, daemon=True)
        self._run_thread.start()
        threading.Thread(target=self._heartbeat, daemon=True).start()

    def _heartbeat(self) -> None:
        # keeps subscribers informed during long model waits; quiet while
        # regular events are flowing
        while self.run_state == "running":
            seen = len(self.events)
            time.sleep(HEARTBEAT_INTERVAL_S)
            if self.run_state == "running" and len(self.events) == seen:
                self._publish({"kind": "heartbeat"})

    def stop_run(self) -> None:
        """Request a stop; in-flight execution is interrupted. Idempotent."""
        with self.lock:
            if self.run_state == "running":
                self.run_state = "stopping"
        self.stop_event.set()
        if self._executor is not None:
            try:
                self._executor.interrupt()
            except CapyError:
                pass

    def wait_run(self, timeout: Optional[float] = None) -> None:
        if self._run_thread is not None:
            self._run_thread.join(timeout)

    def events_since(self, start: int, timeout: float = 30.0) -> list[dict]:
        """Block until events past `start` exist (or timeout); return them."""
        with self._events_cond:
            if len(self.events) <= start:
                self._events_cond.wait(timeout)
            return self.events[start:]

    def close(self) -> None:
        self.stop_event.set()
        if self._executor is not None:
            self._executor.close()

    # -- persistence ------------------------------------------------------

    def to_state(self) -> dict:
        return {
            "id": self.id,
            "settings": settings_to_dict(self.settings),
            "threads": {cid: {"cell_id": t.cell_id, "closed": t.closed,
                              "turns": [{"question": u.question,
                                         "answer": u.answer}
                                        for u in t.turns]}
                        for cid, t in self.threads.items()},
            "story": None if self.story is None else {
                "blocks": [asdict(b) for b in self.story.blocks],
                "annotations": [asdict(a) for a in self.story.annotations],
                "instructions": self.story.instructions,
            },
        }

    @classmethod
    def from_state(cls, state: dict, notebook: Notebook) -> "Session":
        session = cls(notebook=notebook,
                      settings=settings_from_dict(state.get("settings", {})),
                      session_id=state.get("id"))
        for cid, t in state.get("threads", {}).items():
            session.threads[cid] = ClarifyThread(
                cell_id=t["cell_id"], closed=t.get("closed", False),
                turns=[ClarifyTurn(u["question"], u["answer"])
                       for u in t.get("turns", [])])
        story = state.get("story")
        if story:
            session.story = StoryDocument(
                blocks=[Block(**b) for b in story["blocks"]],
                annotations=[Annotation(**a) for a in story["annotations"]],
                instructions=story.get("instructions", ""))
        return session
