"""Per-question insight DAGs: extraction, diagram text emission, cell resolution.

The model returns structured JSON (never raw diagram text); diagram rendering
is deterministic and done here. Yellow nodes are data-derived, green nodes are
external knowledge; edges carry analytical-operation labels.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from graphlib import CycleError, TopologicalSorter

from . import prompts
from .errors import CapyError, ExtractionError
from .gateway import ChatMessage, Gateway
from .notebook import Notebook, render_context

NODE_COLORS = {"data_derived": "#F7E7A1", "external_knowledge": "#BBE5B3"}
NODE_CLASSES = {"data_derived": "yellowNode", "external_knowledge": "greenNode"}


@dataclass
class InsightNode:
    id: str
    label: str
    kind: str  # data_derived | external_knowledge


@dataclass
class InsightEdge:
    src: str
    dst: str
    operation: str


@dataclass
class QuestionGraph:
    question: str
    nodes: list[InsightNode] = field(default_factory=list)
    edges: list[InsightEdge] = field(default_factory=list)


@dataclass
class InsightGraph:
    questions: list[QuestionGraph] = field(default_factory=list)


def validate_graph(obj: dict) -> None:
    """Raise ValueError unless obj matches the graph wire schema and DAG rules."""
    questions = obj.get("questions")
    if not isinstance(questions, list):
        raise ValueError('"questions" must be a list')
    for q in questions:
        if not isinstance(q, dict) or not q.get("question"):
            raise ValueError("each question needs nonempty question text")
        nodes = q.get("nodes", [])
        edges = q.get("edges", [])
        ids = set()
        for node in nodes:
            if not isinstance(node, dict) or not node.get("id") or not node.get("label"):
                raise ValueError("each node needs an id and a nonempty label")
            if node.get("kind") not in NODE_COLORS:
                raise ValueError(f"bad node kind {node.get('kind')!r}")
            if node["id"] in ids:
                raise ValueError(f"duplicate node id {node['id']!r}")
            ids.add(node["id"])
        deps: dict[str, set[str]] = {i: set() for i in ids}
        for edge in edges:
            if not isinstance(edge, dict):
                raise ValueError("each edge must be an object")
            src, dst = edge.get("from"), edge.get("to")
            if src not in ids or dst not in ids:
                raise ValueError(f"edge endpoint missing: {src!r} -> {dst!r}")
            if src == dst:
                raise ValueError(f"self-loop on {src!r}")
            deps[dst].add(src)
        try:
            tuple(TopologicalSorter(deps).static_order())
        except CycleError as exc:
            raise ValueError(f"cycle detected: {exc.args[1]}") from exc


def graph_from_json(obj: dict) -> InsightGraph:
    return InsightGraph(questions=[
        QuestionGraph(
            question=q["question"],
            nodes=[InsightNode(n["id"], n["label"], n["kind"])
                   for n in q.get("nodes", [])],
            edges=[InsightEdge(e["from"], e["to"], e.get("operation", ""))
                   for e in q.get("edges", [])],
        )
        for q in obj["questions"]
    ])


def graph_to_json(g: InsightGraph) -> dict:
    return {"questions": [
        {"question": q.question,
         "nodes": [{"id": n.id, "label": n.label, "kind": n.kind}
                   for n in q.nodes],
         "edges": [{"from": e.src, "to": e.dst, "operation": e.operation}
                   for e in q.edges]}
        for q in g.questions
    ]}


def extract_graph(nb: Notebook, gateway: Gateway,
                  role: str = "initial_respondent") -> InsightGraph:
    """Ask the model for per-question insight DAGs; one repair re-ask on
    invalid output, then ExtractionError."""
    if not nb.cells:
        raise ValueError("notebook is empty")
    context = render_context(nb, 24_000)
    messages = [ChatMessage("user", prompts.render("insights_extract",
                                                   notebook_context=context))]
    try:
        obj = gateway.request_json(role, messages, validate_graph)
    except (CapyError, ValueError) as exc:
        raise ExtractionError(str(exc)) from exc
    return graph_from_json(obj)


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace('"', "&quot;")


def _unescape(text: str) -> str:
    return text.replace("&quot;", '"').replace("&amp;", "&")


def to_mermaid(g: InsightGraph) -> str:
    """Deterministic flowchart rendering; one subgraph per question."""
    lines = ["flowchart TD",
             f"classDef yellowNode fill:{NODE_COLORS['data_derived']}",
             f"classDef greenNode fill:{NODE_COLORS['external_knowledge']}"]
    for qi, q in enumerate(g.questions, start=1):
        lines.append(f'subgraph Q{qi}["{_escape(q.question)}"]')
        rename = {}
        for ni, node in enumerate(q.nodes, start=1):
            mid = f"q{qi}n{ni}"
            rename[node.id] = mid
            lines.append(f'{mid}["{_escape(node.label)}"]:::{NODE_CLASSES[node.kind]}')
        for edge in q.edges:
            lines.append(f"{rename[edge.src]} -->|{_escape(edge.operation)}| "
                         f"{rename[edge.dst]}")
        lines.append("end")
    return "\n".join(lines) + "\n"


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def _tokens(text: str) -> set[str]:
    return set(_TOKEN_RE.findall(text.lower()))


def _cell_text(cell) -> str:
    parts = [cell.source]
    for out in cell.outputs:
        parts.extend([out.text, out.ename, out.evalue])
        if not out.mime.startswith("image/"):
            parts.append(out.data)
    return "\n".join(p for p in parts if p)


def lexical_fallback(label: str, nb: Notebook) -> str:
    """Max token overlap between the element label and each cell; ties go to
    the latest cell. Total: always returns some cell id."""
    label_tokens = _tokens(label)
    best_id = nb.cells[-1].id
    best_score = -1
    for cell in nb.cells:
        score = len(label_tokens & _tokens(_cell_text(cell)))
        if score >= best_score:
            best_score = score
            best_id = cell.id
    return best_id


def resolve_cell(g: InsightGraph, element_label: str, nb: Notebook,
                 gateway: Gateway, role: str = "initial_respondent") -> str:
    """Resolve a graph element to the most relevant cell id; never fails."""
    if not nb.cells:
        raise ValueError("notebook is empty")
    listing = "\n\n".join(f"cell {c.id}:\n{_cell_text(c)}" for c in nb.cells)
    try:
        reply = gateway.complete(role, [ChatMessage("user", prompts.render(
            "insights_resolve", element=element_label, cell_listing=listing))])
        known = {c.id for c in nb.cells}
        for token in re.findall(r"[A-Za-z0-9_-]+", reply):
            if token in known:
                return token
    except CapyError:
        pass
    return lexical_fallback(element_label, nb)
