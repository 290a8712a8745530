"""In-memory notebook model with lossless nbformat v4 read/write.

Cells carry a provenance flag (user vs. assistant) stored under a reserved
metadata key so third-party notebook tools leave it untouched.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass, field
from typing import Any, Optional

from .errors import MalformedFile, UnsupportedVersion

PROVENANCE_KEY = "capy_provenance"

# Rich payloads above this size render into prompt context as a placeholder.
RICH_RENDER_LIMIT = 64 * 1024

_PREFERRED_MIMES = ("image/png", "text/html", "text/plain")


def _join(text: Any) -> str:
    if isinstance(text, list):
        return "".join(text)
    return text if isinstance(text, str) else ""


@dataclass
class Output:
    kind: str  # stream_stdout | stream_stderr | rich | error
    text: str = ""
    mime: str = ""
    data: str = ""
    ename: str = ""
    evalue: str = ""
    traceback: list[str] = field(default_factory=list)
    raw: Optional[dict] = None

    @classmethod
    def stream(cls, name: str, text: str) -> "Output":
        kind = "stream_stdout" if name == "stdout" else "stream_stderr"
        return cls(kind=kind, text=text,
                   raw={"output_type": "stream", "name": name, "text": text})

    @classmethod
    def rich(cls, mime: str, data: str, execute_result: bool = False,
             execution_count: Optional[int] = None) -> "Output":
        if not mime:
            raise ValueError("rich output requires a mime type")
        raw: dict[str, Any] = {
            "output_type": "execute_result" if execute_result else "display_data",
            "data": {mime: data},
            "metadata": {},
        }
        if execute_result:
            raw["execution_count"] = execution_count
        return cls(kind="rich", mime=mime, data=data, raw=raw)

    @classmethod
    def error(cls, ename: str, evalue: str, traceback: list[str]) -> "Output":
        return cls(kind="error", ename=ename, evalue=evalue, traceback=list(traceback),
                   raw={"output_type": "error", "ename": ename, "evalue": evalue,
                        "traceback": list(traceback)})

    @classmethod
    def from_nbformat(cls, obj: dict) -> "Output":
        otype = obj.get("output_type")
        if otype == "stream":
            name = obj.get("name", "stdout")
            kind = "stream_stdout" if name == "stdout" else "stream_stderr"
            return cls(kind=kind, text=_join(obj.get("text", "")), raw=obj)
        if otype == "error":
            return cls(kind="error", ename=obj.get("ename", ""),
                       evalue=obj.get("evalue", ""),
                       traceback=list(obj.get("traceback", [])), raw=obj)
        if otype in ("display_data", "execute_result"):
            data = obj.get("data", {})
            mime = next((m for m in _PREFERRED_MIMES if m in data), None)
            if mime is None:
                mime = sorted(data)[0] if data else "text/plain"
            return cls(kind="rich", mime=mime, data=_join(data.get(mime, "")), raw=obj)
        raise MalformedFile(f"unknown output_type: {otype!r}")

    def to_nbformat(self) -> dict:
        if self.raw is not None:
            return self.raw
        if self.kind in ("stream_stdout", "stream_stderr"):
            return {"output_type": "stream",
                    "name": "stdout" if self.kind == "stream_stdout" else "stderr",
                    "text": self.text}
        if self.kind == "error":
            return {"output_type": "error", "ename": self.ename,
                    "evalue": self.evalue, "traceback": self.traceback}
        return {"output_type": "display_data", "data": {self.mime: self.data},
                "metadata": {}}


@dataclass
class Cell:
    id: str
    kind: str  # code | markdown
    source: str
    outputs: list[Output] = field(default_factory=list)
    provenance: str = "user"
    execution_count: Optional[int] = None
    metadata: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)  # unknown top-level keys, kept verbatim

    def __post_init__(self):
        if self.kind not in ("code", "markdown"):
            raise ValueError(f"bad cell kind: {self.kind!r}")
        if self.kind == "markdown" and (self.outputs or self.execution_count is not None):
            raise ValueError("markdown cells carry no outputs or execution_count")


@dataclass
class Notebook:
    cells: list[Cell] = field(default_factory=list)
    kernel_language: str = "python"
    metadata: dict = field(default_factory=dict)
    nbformat_minor: int = 5
    extra: dict = field(default_factory=dict)

    def cell_by_id(self, cell_id: str) -> Optional[Cell]:
        for cell in self.cells:
            if cell.id == cell_id:
                return cell
        return None


def parse_notebook(content: bytes) -> Notebook:
    """Parse an nbformat v4 file, preserving unknown fields for round-trip."""
    try:
        doc = json.loads(content)
    except (ValueError, UnicodeDecodeError) as exc:
        raise MalformedFile(str(exc)) from exc
    if not isinstance(doc, dict) or "cells" not in doc:
        raise MalformedFile("not a notebook document")
    if doc.get("nbformat") != 4:
        raise UnsupportedVersion(f"nbformat {doc.get('nbformat')!r} is not supported")

    metadata = doc.get("metadata", {})
    language = (metadata.get("kernelspec", {}) or {}).get("language") \
        or (metadata.get("language_info", {}) or {}).get("name") or "python"

    cells: list[Cell] = []
    seen: set[str] = set()
    for raw in doc.get("cells", []):
        if not isinstance(raw, dict) or raw.get("cell_type") not in ("code", "markdown"):
            raise MalformedFile(f"unsupported cell: {raw!r}")
        kind = raw["cell_type"]
        cmeta = dict(raw.get("metadata", {}))
        provenance = cmeta.pop(PROVENANCE_KEY, "user")
        if provenance not in ("user", "assistant"):
            provenance = "user"
        cell_id = raw.get("id") or uuid.uuid4().hex
        if cell_id in seen:
            raise MalformedFile(f"duplicate cell id: {cell_id}")
        seen.add(cell_id)
        extra = {k: v for k, v in raw.items()
                 if k not in ("cell_type", "source", "metadata", "outputs",
                              "execution_count", "id")}
        if kind == "code":
            outputs = [Output.from_nbformat(o) for o in raw.get("outputs", [])]
            cells.append(Cell(id=cell_id, kind=kind, source=_join(raw.get("source", "")),
                              outputs=outputs, provenance=provenance,
                              execution_count=raw.get("execution_count"),
                              metadata=cmeta, extra=extra))
        else:
            cells.append(Cell(id=cell_id, kind=kind, source=_join(raw.get("source", "")),
                              provenance=provenance, metadata=cmeta, extra=extra))

    extra = {k: v for k, v in doc.items()
             if k not in ("cells", "metadata", "nbformat", "nbformat_minor")}
    return Notebook(cells=cells, kernel_language=language, metadata=metadata,
                    nbformat_minor=doc.get("nbformat_minor", 5), extra=extra)


def serialize_notebook(nb: Notebook) -> bytes:
    """Serialize to canonical nbformat v4 JSON; parses back to an equal Notebook."""
    cells = []
    for cell in nb.cells:
        cmeta = dict(cell.metadata)
        if cell.provenance != "user":
            cmeta[PROVENANCE_KEY] = cell.provenance
        raw: dict[str, Any] = {
            "cell_type": cell.kind,
            "id": cell.id,
            "metadata": cmeta,
            "source": cell.source,
        }
        if cell.kind == "code":
            raw["outputs"] = [o.to_nbformat() for o in cell.outputs]
            raw["execution_count"] = cell.execution_count
        raw.update(cell.extra)
        cells.append(raw)
    doc = {
        "cells": cells,
        "metadata": nb.metadata,
        "nbformat": 4,
        "nbformat_minor": nb.nbformat_minor,
    }
    doc.update(nb.extra)
    return (json.dumps(doc, ensure_ascii=False, sort_keys=True, indent=1) + "\n").encode()


def append_cell(nb: Notebook, kind: str, source: str, provenance: str = "user") -> str:
    """Append a fresh cell and return its id."""
    cell = Cell(id=uuid.uuid4().hex, kind=kind, source=source, provenance=provenance)
    nb.cells.append(cell)
    return cell.id


_ELISION = "[... cell elided ...]"


def _render_output(out: Output) -> str:
    if out.kind in ("stream_stdout", "stream_stderr"):
        label = "stdout" if out.kind == "stream_stdout" else "stderr"
        return f"[{label}]\n{out.text}"
    if out.kind == "error":
        tb = "\n".join(out.traceback)
        return f"[error] {out.ename}: {out.evalue}\n{tb}"
    if out.mime.startswith("image/") or len(out.data) > RICH_RENDER_LIMIT:
        return f"[rich output {out.mime}, {len(out.data)} bytes]"
    return f"[{out.mime}]\n{out.data}"


def _render_cell(index: int, cell: Cell) -> tuple[str, str]:
    header = f"--- cell {index} ({cell.kind}, {cell.provenance}) ---"
    parts = [cell.source]
    for out in cell.outputs:
        parts.append(_render_output(out))
    return header, "\n".join(parts)


def render_context(nb: Notebook, budget: int) -> str:
    """Deterministic text rendering of the notebook, at most `budget` characters.

    When over budget, the oldest cell bodies are elided first; the last cell is
    always rendered whole because the loop's next decision depends on it.
    """
    if budget <= 0:
        raise ValueError("budget must be positive")
    if not nb.cells:
        return ""
    rendered = [_render_cell(i, c) for i, c in enumerate(nb.cells)]
    blocks = [f"{h}\n{b}" for h, b in rendered]

    def total() -> int:
        return len("\n".join(blocks))

    # Pass 1: elide oldest bodies.
    for i in range(len(blocks) - 1):
        if total() <= budget:
            break
        blocks[i] = f"{rendered[i][0]}\n{_ELISION}"
    # Pass 2: drop elided blocks entirely, oldest first.
    while total() > budget and len(blocks) > 1:
        blocks.pop(0)
    return "\n".join(blocks)
