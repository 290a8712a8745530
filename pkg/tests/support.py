"""Shared helpers for the test suite.

Holds independent oracles (a from-scratch flowchart-text parser, a brute-force
cell-overlap scorer, annotation invariant checks) plus small builders for
scripted-provider replies. Oracles here deliberately do not reuse the package's
own implementations.
"""

import json
import random
import re
import string

from capy.notebook import Cell, Notebook, Output

# -- scripted reply builders -------------------------------------------------


def envelope(kind, content, done, expect=None, delay_ms=None):
    entry = {"reply": json.dumps({"type": kind, "content": content,
                                  "done": done})}
    if expect is not None:
        entry["expect_substring"] = expect
    if delay_ms is not None:
        entry["delay_ms"] = delay_ms
    return entry


def critique(ready, items=(), applicable=True, expect=None):
    entry = {"reply": json.dumps({
        "applicable": applicable, "ready": ready,
        "items": [{"issue": i, "suggestion": s} for i, s in items]})}
    if expect is not None:
        entry["expect_substring"] = expect
    return entry


def ready_critics(n=4):
    return [critique(True) for _ in range(n)]


def refiner(revised, accepted=(), rejected=(), expect=None):
    entry = {"reply": json.dumps({
        "accepted": list(accepted),
        "rejected": [{"ref": r, "rationale": why} for r, why in rejected],
        "revised": revised})}
    if expect is not None:
        entry["expect_substring"] = expect
    return entry


def reply(obj, expect=None, delay_ms=None):
    entry = {"reply": obj if isinstance(obj, str) else json.dumps(obj)}
    if expect is not None:
        entry["expect_substring"] = expect
    if delay_ms is not None:
        entry["delay_ms"] = delay_ms
    return entry


# -- independent flowchart-text parser ---------------------------------------

_NODE_RE = re.compile(r'^(\w+)\["(.*)"\]:::(yellowNode|greenNode)$')
_EDGE_RE = re.compile(r'^(\w+) -->\|(.*)\| (\w+)$')
_SUBGRAPH_RE = re.compile(r'^subgraph (\w+)\["(.*)"\]$')


def _unescape(text):
    return text.replace("&quot;", '"').replace("&amp;", "&")


def parse_flowchart(text):
    """Parse the emitted diagram text back into per-question structure.

    Returns a list of dicts: {"question", "nodes": {id: (label, kind)},
    "edges": [(from_id, op, to_id)]}.
    """
    lines = text.splitlines()
    assert lines[0] == "flowchart TD"
    assert lines[1] == "classDef yellowNode fill:#F7E7A1"
    assert lines[2] == "classDef greenNode fill:#BBE5B3"
    questions = []
    current = None
    for line in lines[3:]:
        if not line:
            continue
        m = _SUBGRAPH_RE.match(line)
        if m:
            assert current is None, "nested subgraph"
            current = {"question": _unescape(m.group(2)), "nodes": {},
                       "edges": []}
            continue
        if line == "end":
            assert current is not None
            questions.append(current)
            current = None
            continue
        m = _NODE_RE.match(line)
        if m:
            kind = ("data_derived" if m.group(3) == "yellowNode"
                    else "external_knowledge")
            current["nodes"][m.group(1)] = (_unescape(m.group(2)), kind)
            continue
        m = _EDGE_RE.match(line)
        if m:
            current["edges"].append((m.group(1), _unescape(m.group(2)),
                                     m.group(3)))
            continue
        raise AssertionError(f"unparseable line: {line!r}")
    assert current is None, "unterminated subgraph"
    return questions


def flowchart_shape(parsed):
    """Isomorphism key: per question, multisets of node and edge labels."""
    shape = []
    for q in parsed:
        nodes = sorted(q["nodes"].values())
        edges = sorted((q["nodes"][a][0], op, q["nodes"][b][0])
                       for a, op, b in q["edges"])
        shape.append((q["question"], tuple(nodes), tuple(edges)))
    return shape


def graph_shape(graph_json):
    """Same isomorphism key computed from the wire-format graph JSON."""
    shape = []
    for q in graph_json["questions"]:
        labels = {n["id"]: (n["label"], n["kind"]) for n in q["nodes"]}
        nodes = sorted(labels.values())
        edges = sorted((labels[e["from"]][0], e["operation"],
                        labels[e["to"]][0])
                       for e in q["edges"])
        shape.append((q["question"], tuple(nodes), tuple(edges)))
    return shape


# -- random structure generators ---------------------------------------------

_WORDS = ["revenue", "churn", "cohort", "spike", "outlier", "trend", "region",
          "median", "growth", "segment", "conversion", "latency", "seasonal",
          "anomaly", "forecast", "correlation"]


def random_label(rng):
    n = rng.randint(1, 4)
    words = [rng.choice(_WORDS) for _ in range(n)]
    if rng.random() < 0.3:
        words.append(rng.choice(['"quoted"', "A&B", "x & y"]))
    return " ".join(words)


def random_graph_json(rng):
    questions = []
    for qi in range(rng.randint(1, 3)):
        node_count = rng.randint(1, 6)
        nodes = [{"id": f"n{qi}_{i}", "label": random_label(rng),
                  "kind": rng.choice(["data_derived", "external_knowledge"])}
                 for i in range(node_count)]
        edges = []
        for j in range(1, node_count):
            for i in range(j):
                if rng.random() < 0.4:
                    # i < j keeps the graph acyclic by construction
                    edges.append({"from": nodes[i]["id"],
                                  "to": nodes[j]["id"],
                                  "operation": rng.choice(
                                      ["filter", "aggregate", "compare",
                                       "join", "test & verify"])})
        questions.append({"question": random_label(rng) + "?",
                          "nodes": nodes, "edges": edges})
    return {"questions": questions}


def random_notebook(rng):
    cells = []
    for i in range(rng.randint(1, 8)):
        words = " ".join(rng.choice(_WORDS)
                         for _ in range(rng.randint(0, 6)))
        kind = rng.choice(["code", "markdown"])
        cell = Cell(id=f"cell{i}", kind=kind, source=words)
        if kind == "code" and rng.random() < 0.5:
            cell.outputs = [Output.stream("stdout", " ".join(
                rng.choice(_WORDS) for _ in range(rng.randint(1, 4))))]
        cells.append(cell)
    return Notebook(cells=cells)


def overlap_oracle(label, nb):
    """Brute-force reference for lexical cell resolution: token overlap,
    latest cell wins ties (including the all-zero case)."""
    def tokens(text):
        return set(re.findall(r"[a-z0-9]+", text.lower()))

    label_tokens = tokens(label)
    scores = []
    for cell in nb.cells:
        parts = [cell.source]
        for out in cell.outputs:
            parts.extend([out.text, out.ename, out.evalue])
            if not out.mime.startswith("image/"):
                parts.append(out.data)
        scores.append(len(label_tokens & tokens("\n".join(p for p in parts
                                                          if p))))
    best = max(scores)
    for i in range(len(scores) - 1, -1, -1):
        if scores[i] == best:
            return nb.cells[i].id
    raise AssertionError("unreachable")


# -- story invariants ---------------------------------------------------------


def check_story_invariants(story, nb, max_per_block):
    by_id = {b.id: b for b in story.blocks}
    per_block = {}
    for a in story.annotations:
        block = by_id.get(a.block_id)
        assert block is not None, f"annotation on missing block {a.block_id}"
        assert block.kind != "figure_ref"
        assert 0 <= a.start < a.end <= len(block.text), \
            f"annotation out of bounds: {a}"
        assert a.dimension in ("semantic", "rhetorical", "pragmatic")
        assert a.explanation
        for other in per_block.get(a.block_id, []):
            assert a.end <= other.start or a.start >= other.end, \
                f"overlap: {a} vs {other}"
        per_block.setdefault(a.block_id, []).append(a)
    for block_id, anns in per_block.items():
        assert len(anns) <= max_per_block
    if nb is not None:
        for b in story.blocks:
            if b.kind == "figure_ref":
                cell = nb.cell_by_id(b.text)
                assert cell is not None and cell.outputs


def random_story_output(rng, nb=None):
    """A model-shaped story JSON object, possibly with invalid annotations."""
    blocks = []
    for i in range(rng.randint(1, 6)):
        kind = rng.choice(["heading", "paragraph", "paragraph", "list",
                           "figure_ref"])
        if kind == "figure_ref":
            if nb is not None and nb.cells and rng.random() < 0.6:
                text = rng.choice(nb.cells).id
            else:
                text = "no_such_cell"
        else:
            text = " ".join(rng.choice(_WORDS)
                            for _ in range(rng.randint(1, 10)))
        blocks.append({"id": f"b{i}", "kind": kind, "text": text})
    annotations = []
    for _ in range(rng.randint(0, 8)):
        block = rng.choice(blocks)
        start = rng.randint(-2, max(len(block["text"]), 1))
        end = start + rng.randint(-1, 12)
        annotations.append({
            "block_id": block["id"] if rng.random() < 0.9 else "ghost",
            "start": start, "end": end,
            "dimension": rng.choice(["semantic", "rhetorical", "pragmatic",
                                     "bogus"]),
            "explanation": rng.choice(["because it matters", ""])})
    return {"blocks": blocks, "annotations": annotations}


def random_ident(rng, length=6):
    return "".join(rng.choice(string.ascii_lowercase) for _ in range(length))
