"""Per-cell threaded Q&A, isolated from the notebook document.

Each cell anchors a thread; prompts carry the rendered notebook, the selected
cell verbatim, and the thread history. Asking never mutates the notebook.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import prompts
from .errors import UnknownCell
from .gateway import ChatMessage, Gateway
from .notebook import Notebook, render_context


@dataclass
class ClarifyTurn:
    question: str
    answer: str


@dataclass
class ClarifyThread:
    cell_id: str
    turns: list[ClarifyTurn] = field(default_factory=list)
    closed: bool = False  # set when the anchoring cell disappears


def ask(nb: Notebook, threads: dict[str, ClarifyThread], cell_id: str,
        question: str, gateway: Gateway,
        role: str = "initial_respondent") -> str:
    """Answer a question about one cell and append the turn to its thread."""
    if not question:
        raise ValueError("question must be nonempty")
    cell = nb.cell_by_id(cell_id)
    thread = threads.get(cell_id)
    if cell is None:
        if thread is not None:
            thread.closed = True
        raise UnknownCell(f"no cell {cell_id!r} in the notebook")
    if thread is None:
        thread = threads.setdefault(cell_id, ClarifyThread(cell_id=cell_id))

    history = "\n".join(f"Q: {t.question}\nA: {t.answer}" for t in thread.turns) \
        or "(none)"
    prompt = prompts.render(
        "clarify",
        notebook_context=render_context(nb, 24_000) or "(empty notebook)",
        cell_source=cell.source,
        thread_history=history,
        question=question,
    )
    answer = gateway.complete(role, [ChatMessage("user", prompt)])
    thread.turns.append(ClarifyTurn(question=question, answer=answer))
    return answer
