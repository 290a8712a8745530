"""Data-story generation, annotation upkeep, feedback-driven revision, HTML export.

Stories are block-structured internally; HTML exists only at export time so
annotation offsets stay stable under revision and manual edits.
"""

from __future__ import annotations

import html
import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from . import prompts
from .critique import CritiqueTranscript, ProtocolConfig, run_protocol
from .errors import (
    CapyError,
    InvalidAnchor,
    MissingFigure,
    StoryParseError,
    UnknownBlock,
)
from .gateway import ChatMessage, Gateway
from .notebook import Notebook, render_context

log = logging.getLogger(__name__)

BLOCK_KINDS = ("heading", "paragraph", "figure_ref", "list")
DIMENSIONS = ("semantic", "rhetorical", "pragmatic")
DIMENSION_COLORS = {"semantic": "#0F6B6B", "rhetorical": "#2B5FB0",
                    "pragmatic": "#C1683C"}

DEFAULT_MAX_ANNOTATIONS_PER_BLOCK = 2


@dataclass
class Block:
    id: str
    kind: str
    text: str  # for figure_ref: the id of an output-bearing notebook cell


@dataclass
class Annotation:
    block_id: str
    start: int
    end: int
    dimension: str
    explanation: str


@dataclass
class Feedback:
    scope: str  # global | local
    text: str
    anchor: Optional[dict] = None  # {block_id, start, end}, required iff local


@dataclass
class StoryDocument:
    blocks: list[Block] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)
    instructions: str = ""

    def block_by_id(self, block_id: str) -> Optional[Block]:
        for block in self.blocks:
            if block.id == block_id:
                return block
        return None


def story_to_json(story: StoryDocument) -> dict:
    return {
        "blocks": [{"id": b.id, "kind": b.kind, "text": b.text}
                   for b in story.blocks],
        "annotations": [{"block_id": a.block_id, "start": a.start, "end": a.end,
                         "dimension": a.dimension, "explanation": a.explanation}
                        for a in story.annotations],
    }


def _validate_story_shape(obj: dict) -> None:
    blocks = obj.get("blocks")
    if not isinstance(blocks, list) or not blocks:
        raise ValueError('"blocks" must be a nonempty list')
    seen = set()
    for b in blocks:
        if not isinstance(b, dict) or not b.get("id") \
                or b.get("kind") not in BLOCK_KINDS \
                or not isinstance(b.get("text"), str):
            raise ValueError(f"bad block: {b!r}")
        if b["id"] in seen:
            raise ValueError(f"duplicate block id {b['id']!r}")
        seen.add(b["id"])
    if not isinstance(obj.get("annotations", []), list):
        raise ValueError('"annotations" must be a list')


def _sanitize(obj: dict, nb: Optional[Notebook], instructions: str,
              max_per_block: int) -> StoryDocument:
    """Build a StoryDocument from model output, dropping whatever violates the
    invariants (bounds, overlap, density, dangling figure refs). Drops are
    logged, never fatal."""
    blocks: list[Block] = []
    for b in obj["blocks"]:
        block = Block(id=b["id"], kind=b["kind"], text=b["text"])
        if block.kind == "figure_ref":
            cell = nb.cell_by_id(block.text) if nb else None
            if cell is None or not cell.outputs:
                log.warning("dropping figure_ref %s: no output-bearing cell %r",
                            block.id, block.text)
                continue
        blocks.append(block)
    by_id = {b.id: b for b in blocks}

    kept: dict[str, list[Annotation]] = {b.id: [] for b in blocks}
    raw_annotations = obj.get("annotations", [])
    for a in sorted((a for a in raw_annotations if isinstance(a, dict)),
                    key=lambda a: (str(a.get("block_id")), a.get("start") or 0)):
        block = by_id.get(a.get("block_id"))
        start, end = a.get("start"), a.get("end")
        if block is None or block.kind == "figure_ref" \
                or a.get("dimension") not in DIMENSIONS \
                or not a.get("explanation") \
                or not isinstance(start, int) or not isinstance(end, int) \
                or not (0 <= start < end <= len(block.text)):
            log.warning("dropping invalid annotation: %r", a)
            continue
        peers = kept[block.id]
        if any(not (end <= p.start or start >= p.end) for p in peers):
            log.warning("dropping overlapping annotation: %r", a)
            continue
        if len(peers) >= max_per_block:
            log.warning("dropping annotation beyond density cap: %r", a)
            continue
        peers.append(Annotation(block.id, start, end, a["dimension"],
                                a["explanation"]))

    annotations = [a for b in blocks for a in kept[b.id]]
    return StoryDocument(blocks=blocks, annotations=annotations,
                         instructions=instructions)


def generate_story(nb: Notebook, instructions: str, mode: str, gateway: Gateway,
                   max_rounds: int = 1,
                   max_annotations_per_block: int = DEFAULT_MAX_ANNOTATIONS_PER_BLOCK,
                   ) -> tuple[StoryDocument, Optional[CritiqueTranscript]]:
    if not nb.cells:
        raise ValueError("notebook is empty")
    context = prompts.render("story_generate", instructions=instructions,
                             notebook_context=render_context(nb, 24_000))
    system = prompts.render("story_system",
                            max_annotations=str(max_annotations_per_block))
    messages = [ChatMessage("system", system), ChatMessage("user", context)]
    transcript = None
    if mode == "multi":
        config = ProtocolConfig(task="story_draft", max_rounds=max_rounds)
        obj, transcript = run_protocol("story_draft", context, config, gateway,
                                       initial_messages=messages)
    else:
        try:
            obj = gateway.request_json("initial_respondent", messages,
                                       _validate_story_shape)
        except (CapyError, ValueError) as exc:
            raise StoryParseError(str(exc)) from exc
    try:
        _validate_story_shape(obj)
    except ValueError as exc:
        raise StoryParseError(str(exc)) from exc
    return _sanitize(obj, nb, instructions, max_annotations_per_block), transcript


def anchored_text(story: StoryDocument, anchor: dict) -> str:
    block = story.block_by_id(anchor.get("block_id", ""))
    if block is None:
        raise InvalidAnchor(f"no block {anchor.get('block_id')!r}")
    start, end = anchor.get("start"), anchor.get("end")
    if not isinstance(start, int) or not isinstance(end, int) \
            or not (0 <= start < end <= len(block.text)):
        raise InvalidAnchor(f"anchor out of bounds: {anchor!r}")
    return block.text[start:end]


def apply_feedback(story: StoryDocument, feedback: list[Feedback], nb: Notebook,
                   gateway: Gateway,
                   max_annotations_per_block: int = DEFAULT_MAX_ANNOTATIONS_PER_BLOCK,
                   ) -> StoryDocument:
    """Revise the story per user feedback; local items quote their anchored
    text verbatim in the prompt. Empty feedback is a no-op with zero calls."""
    if not feedback:
        return story
    rendered = []
    for i, item in enumerate(feedback, start=1):
        if item.scope == "local":
            if item.anchor is None:
                raise InvalidAnchor("local feedback requires an anchor")
            quoted = anchored_text(story, item.anchor)
            rendered.append(f'{i}. [local, on "{quoted}" in block '
                            f'{item.anchor["block_id"]}] {item.text}')
        else:
            rendered.append(f"{i}. [global] {item.text}")
    prompt = prompts.render(
        "story_feedback",
        story_json=json.dumps(story_to_json(story), indent=1),
        feedback="\n".join(rendered),
        notebook_context=render_context(nb, 24_000) if nb.cells else "(empty)",
    )
    system = prompts.render("story_system",
                            max_annotations=str(max_annotations_per_block))
    try:
        obj = gateway.request_json("initial_respondent",
                                   [ChatMessage("system", system),
                                    ChatMessage("user", prompt)],
                                   _validate_story_shape)
    except (CapyError, ValueError) as exc:
        raise StoryParseError(str(exc)) from exc
    return _sanitize(obj, nb, story.instructions, max_annotations_per_block)


def update_blocks(story: StoryDocument, edits: dict[str, str]) -> StoryDocument:
    """Apply manual block edits; annotations whose exact span text no longer
    matches are dropped."""
    for block_id in edits:
        if story.block_by_id(block_id) is None:
            raise UnknownBlock(f"no block {block_id!r}")
    new_blocks = [Block(b.id, b.kind, edits.get(b.id, b.text))
                  for b in story.blocks]
    by_id = {b.id: b for b in story.blocks}
    kept = []
    for a in story.annotations:
        if a.block_id not in edits:
            kept.append(a)
            continue
        old_span = by_id[a.block_id].text[a.start:a.end]
        new_text = edits[a.block_id]
        if a.end <= len(new_text) and new_text[a.start:a.end] == old_span:
            kept.append(a)
        else:
            log.warning("dropping annotation invalidated by edit: %r", a)
    return StoryDocument(blocks=new_blocks, annotations=kept,
                         instructions=story.instructions)


_CSS = "\n".join(
    f".dim-{dim} {{ background-color: {color}22; "
    f"border-bottom: 2px solid {color}; }}"
    for dim, color in DIMENSION_COLORS.items()
)

_BLOCK_TAGS = {"heading": "h2", "paragraph": "p", "list": "p"}


def _render_text_block(block: Block, annotations: list[Annotation]) -> str:
    spans = sorted(annotations, key=lambda a: a.start)
    parts = []
    cursor = 0
    for a in spans:
        parts.append(html.escape(block.text[cursor:a.start]))
        parts.append(
            f'<mark class="dim-{a.dimension}" data-dimension="{a.dimension}" '
            f'title="{html.escape(a.explanation, quote=True)}">'
            f"{html.escape(block.text[a.start:a.end])}</mark>")
        cursor = a.end
    parts.append(html.escape(block.text[cursor:]))
    tag = _BLOCK_TAGS[block.kind]
    cls = ' class="list"' if block.kind == "list" else ""
    return f'<{tag} data-block-id="{block.id}"{cls}>{"".join(parts)}</{tag}>'


def export_html(story: StoryDocument, nb: Optional[Notebook] = None) -> bytes:
    """Self-contained HTML export with dimension-tagged marks and inline
    figures. Raises MissingFigure for a figure_ref without an image output."""
    body = []
    for block in story.blocks:
        if block.kind == "figure_ref":
            cell = nb.cell_by_id(block.text) if nb else None
            image = None
            if cell:
                image = next((o for o in cell.outputs
                              if o.kind == "rich" and o.mime.startswith("image/")),
                             None)
            if image is None:
                raise MissingFigure(f"cell {block.text!r} has no image output")
            data = image.data.replace("\n", "")
            body.append(f'<figure data-block-id="{block.id}" '
                        f'data-cell-id="{block.text}">'
                        f'<img src="data:{image.mime};base64,{data}"/></figure>')
        else:
            annotations = [a for a in story.annotations if a.block_id == block.id]
            body.append(_render_text_block(block, annotations))
    doc = ("<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"/>"
           f"<style>\nbody {{ max-width: 48rem; margin: 2rem auto; "
           f"font-family: Georgia, serif; }}\n.list {{ white-space: pre-wrap; }}\n"
           f"{_CSS}\n</style></head>\n<body>\n"
           + "\n".join(body) + "\n</body></html>\n")
    return doc.encode("utf-8")
