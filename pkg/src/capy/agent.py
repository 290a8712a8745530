"""Agentic EDA loop: one notebook cell per model turn, execute, observe, repeat.

Error repair is not a special prompt mode; a failed execution is fed back as an
observation, and a consecutive-error counter enforces the graceful-exit cap.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterator

from . import prompts
from .critique import ProtocolConfig, run_protocol
from .errors import CapyError, EnvelopeParseError, WorkerDead
from .executor import ExecutionResult
from .gateway import ChatMessage
from .notebook import append_cell, render_context

log = logging.getLogger(__name__)


@dataclass
class LoopBudget:
    max_cells: int = 12
    max_consecutive_error_repairs: int = 3
    context_budget: int = 24_000

    def __post_init__(self):
        if self.max_cells <= 0 or self.max_consecutive_error_repairs <= 0 \
                or self.context_budget <= 0:
            raise ValueError("budget fields must be positive")


@dataclass
class LoopEvent:
    kind: str
    payload: dict = field(default_factory=dict)


TERMINAL_EVENTS = ("loop_done", "loop_stopped", "loop_failed")


def _result_summary(result: ExecutionResult) -> str:
    parts = [f"status: {result.status}"]
    for out in result.outputs:
        if out.kind == "error":
            parts.append(f"error {out.ename}: {out.evalue}")
            parts.extend(out.traceback[-3:])
        elif out.kind in ("stream_stdout", "stream_stderr"):
            parts.append(out.text)
        elif out.mime.startswith("image/"):
            parts.append(f"[figure produced: {out.mime}]")
        else:
            parts.append(out.data)
    return "\n".join(parts)


def run_query(session, query: str, mode: str, budget: LoopBudget) -> Iterator[LoopEvent]:
    """Yield LoopEvents for one agentic run; exactly one terminal event."""
    if not query:
        raise ValueError("query must be nonempty")
    nb = session.notebook
    last_result = "(none yet)"
    consecutive_errors = 0
    cells_appended = 0

    while True:
        if session.stop_event.is_set():
            yield LoopEvent("loop_stopped")
            return
        if cells_appended >= budget.max_cells:
            yield LoopEvent("loop_failed", {"reason": "budget_exhausted"})
            return

        context = render_context(nb, budget.context_budget) or "(empty notebook)"
        turn = prompts.render("eda_turn", query=query, notebook_context=context,
                              last_result=last_result)
        messages = [ChatMessage("system", prompts.load("eda_system").template),
                    ChatMessage("user", turn)]
        try:
            if mode == "multi":
                config = ProtocolConfig(task="eda_turn",
                                        max_rounds=session.settings.max_rounds)
                envelope, transcript = run_protocol(
                    "eda_turn", turn, config, session.gateway,
                    initial_messages=messages)
                session.last_transcript = transcript
            else:
                envelope = session.gateway.request_envelope(
                    "initial_respondent", messages)
        except EnvelopeParseError as exc:
            yield LoopEvent("loop_failed", {"reason": "envelope_parse_failed",
                                            "error": str(exc)})
            return
        except CapyError as exc:
            yield LoopEvent("loop_failed", {"reason": "gateway_error",
                                            "error": str(exc)})
            return

        if session.stop_event.is_set():
            # stopped between the model call and the append: no partial cell
            yield LoopEvent("loop_stopped")
            return

        cell_id = append_cell(nb, envelope.cell_kind, envelope.content,
                              provenance="assistant")
        cells_appended += 1
        yield LoopEvent("cell_appended", {"cell_id": cell_id,
                                          "cell_kind": envelope.cell_kind,
                                          "source": envelope.content})

        if envelope.cell_kind == "code":
            yield LoopEvent("execution_started", {"cell_id": cell_id})
            try:
                result = session.executor.execute(
                    envelope.content, timeout_ms=session.settings.timeout_ms)
            except WorkerDead as exc:
                yield LoopEvent("loop_failed", {"reason": "worker_dead",
                                                "error": str(exc)})
                return
            cell = nb.cell_by_id(cell_id)
            cell.outputs = result.outputs
            cell.execution_count = result.execution_count
            yield LoopEvent("execution_finished",
                            {"cell_id": cell_id, "status": result.status,
                             "duration_ms": result.duration_ms})
            last_result = _result_summary(result)

            if result.status == "interrupted":
                yield LoopEvent("loop_stopped")
                return
            if result.status in ("error", "timeout"):
                consecutive_errors += 1
                if consecutive_errors > budget.max_consecutive_error_repairs:
                    yield LoopEvent("loop_failed",
                                    {"reason": "repair_exhausted",
                                     "attempts": consecutive_errors - 1})
                    return
                yield LoopEvent("repair_attempt", {"attempt": consecutive_errors})
                continue
            consecutive_errors = 0
        else:
            last_result = "(markdown cell, nothing executed)"

        if envelope.done:
            yield LoopEvent("loop_done", {"cells": cells_appended})
            return
