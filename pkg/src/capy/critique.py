"""Multi-agent critique-and-refine protocol.

An initial respondent proposes, role-specialized critics review in a wave, and
a refiner accepts/rejects critiques (rationales required for rejections) and
revises, iterating until all critics are ready or the round cap is hit. A wave
is one barrier of model calls: the initial call, one critic batch, or one
refiner call; it is the protocol's latency unit.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Optional

from . import prompts
from .errors import CapyError, EnvelopeParseError, InvalidConfig
from .gateway import AgentEnvelope, ChatMessage, Gateway, parse_envelope

log = logging.getLogger(__name__)

DIMENSIONS = ("semantic", "rhetorical", "pragmatic")

EDA_CRITICS = ("critic_plan", "critic_code", "critic_visualization",
               "critic_interpretation")
STORY_CRITICS = ("critic_semantic", "critic_rhetorical", "critic_pragmatic")

EDA_ROLES = frozenset(("initial_respondent", "refiner") + EDA_CRITICS)
STORY_ROLES = frozenset(("initial_respondent", "refiner") + STORY_CRITICS)

# Which design-space dimensions each role covers.
ROLE_DIMENSIONS: dict[str, frozenset[str]] = {
    "initial_respondent": frozenset(DIMENSIONS),
    "refiner": frozenset(DIMENSIONS),
    "critic_plan": frozenset({"rhetorical"}),
    "critic_code": frozenset({"semantic", "rhetorical"}),
    "critic_visualization": frozenset({"semantic", "rhetorical"}),
    "critic_interpretation": frozenset(DIMENSIONS),
    "critic_semantic": frozenset({"semantic"}),
    "critic_rhetorical": frozenset({"rhetorical"}),
    "critic_pragmatic": frozenset({"pragmatic"}),
}

CRITIC_FOCUS = {
    "critic_plan": "analysis plans: whether the response lays out or follows a "
                   "sound, clearly communicated analytical strategy.",
    "critic_code": "code: correctness, robustness, and fit of the code to the "
                   "chosen analytical strategy.",
    "critic_visualization": "visualizations: design, labeling, and honesty of "
                            "any charts produced or proposed.",
    "critic_interpretation": "interpretations and summaries: accurate reading "
                             "of results, narration of strategies, and "
                             "actionable insights.",
    "critic_semantic": "the semantic dimension: precise specification and "
                       "interpretation of analytical objects and results, and "
                       "accurate wording of findings.",
    "critic_rhetorical": "the rhetorical dimension: choice and narration of "
                         "analytical strategies and narrative structure to "
                         "persuasively support insights.",
    "critic_pragmatic": "the pragmatic dimension: augmentation of results with "
                        "external or domain knowledge to propose effective "
                        "actions.",
}


@dataclass
class CritiqueItem:
    issue: str
    suggestion: str


@dataclass
class Critique:
    role: str
    applicable: bool
    ready: bool
    items: list[CritiqueItem] = field(default_factory=list)


@dataclass
class RejectedItem:
    ref: str
    rationale: str


@dataclass
class RefinerDecision:
    accepted: list[str]
    rejected: list[RejectedItem]
    revised: object  # AgentEnvelope for EDA turns, story JSON dict for drafts


@dataclass
class Round:
    critiques: list[Critique]
    decision: Optional[RefinerDecision] = None


@dataclass
class CritiqueTranscript:
    task: str
    initial: object
    rounds: list[Round] = field(default_factory=list)
    termination: str = "round_cap"  # all_ready | round_cap
    wave_count: int = 1
    degraded: bool = False

    def to_json(self) -> str:
        def encode(obj):
            if isinstance(obj, AgentEnvelope):
                return {"type": obj.cell_kind, "content": obj.content,
                        "done": obj.done}
            return obj.__dict__
        return json.dumps(self, default=encode, indent=2)


@dataclass
class ProtocolConfig:
    task: str  # eda_turn | story_draft
    roles: frozenset[str] = frozenset()
    max_rounds: int = 1
    strict: bool = False
    include_images: bool = False

    def __post_init__(self):
        if not self.roles:
            self.roles = EDA_ROLES if self.task == "eda_turn" else STORY_ROLES


def expected_roles(task: str) -> frozenset[str]:
    if task == "eda_turn":
        return EDA_ROLES
    if task == "story_draft":
        return STORY_ROLES
    raise InvalidConfig(f"unknown task {task!r}")


def coverage_table(config: ProtocolConfig) -> dict[str, set[str]]:
    """Map each design-space dimension to the roles that cover it."""
    unknown = config.roles - set(ROLE_DIMENSIONS)
    if unknown:
        raise InvalidConfig(f"unknown roles: {sorted(unknown)}")
    table = {dim: {role for role in config.roles if dim in ROLE_DIMENSIONS[role]}
             for dim in DIMENSIONS}
    if config.strict:
        for dim, roles in table.items():
            if len(roles) < 3:
                raise InvalidConfig(
                    f"dimension {dim!r} covered by only {len(roles)} roles")
    return table


def _critics_for(config: ProtocolConfig) -> list[str]:
    order = EDA_CRITICS if config.task == "eda_turn" else STORY_CRITICS
    return [role for role in order if role in config.roles]


def _validate_critique(obj: dict) -> None:
    if not isinstance(obj.get("applicable"), bool):
        raise ValueError('"applicable" must be a boolean')
    if not isinstance(obj.get("ready"), bool):
        raise ValueError('"ready" must be a boolean')
    items = obj.get("items", [])
    if not isinstance(items, list):
        raise ValueError('"items" must be a list')
    for item in items:
        if not isinstance(item, dict) or not item.get("issue") \
                or not item.get("suggestion"):
            raise ValueError("each item needs a nonempty issue and suggestion")


def _serialize_response(task: str, response) -> str:
    if isinstance(response, AgentEnvelope):
        return response.to_json()
    return json.dumps(response)


def _parse_revised(task: str, revised) -> object:
    if task == "eda_turn":
        if isinstance(revised, dict):
            return parse_envelope(json.dumps(revised))
        raise ValueError('"revised" must be an envelope object')
    if not isinstance(revised, dict) or not isinstance(revised.get("blocks"), list):
        raise ValueError('"revised" must be a story object with a "blocks" list')
    return revised


REVISED_SCHEMA = {
    "eda_turn": '{"type": "code" or "markdown", "content": "...", "done": bool}',
    "story_draft": 'the full story JSON object ({"blocks": [...], "annotations": [...]})',
}


class ProtocolAbort(CapyError):
    pass


def run_protocol(task: str, context: str, config: ProtocolConfig,
                 gateway: Gateway,
                 initial_messages: Optional[list[ChatMessage]] = None,
                 figure: Optional[tuple[str, bytes]] = None,
                 ) -> tuple[object, CritiqueTranscript]:
    """Run the critique protocol; returns (final response, transcript).

    Gateway or parse failures after the initial response degrade gracefully:
    the best response so far is returned with the transcript's degraded flag
    set. A failed initial response propagates, as there is nothing to return.
    """
    if config.max_rounds < 1:
        raise InvalidConfig("max_rounds must be >= 1")
    if config.roles != expected_roles(task):
        raise InvalidConfig(f"task {task!r} requires roles "
                            f"{sorted(expected_roles(task))}")

    if initial_messages is None:
        initial_messages = _default_initial_messages(task, context)
    response = _initial_response(task, gateway, initial_messages)
    transcript = CritiqueTranscript(task=task, initial=response, wave_count=1)

    rationale_history: list[str] = []
    try:
        for _ in range(config.max_rounds):
            critiques = _critic_wave(task, context, config, gateway, response,
                                     rationale_history, figure)
            transcript.wave_count += 1
            if all(c.ready for c in critiques):
                transcript.rounds.append(Round(critiques=critiques))
                transcript.termination = "all_ready"
                return response, transcript
            decision = _refiner_wave(task, context, gateway, response, critiques)
            transcript.wave_count += 1
            transcript.rounds.append(Round(critiques=critiques, decision=decision))
            response = decision.revised
            rationale_history.extend(
                f"[{r.ref}] {r.rationale}" for r in decision.rejected)
        transcript.termination = "round_cap"
        return response, transcript
    except (CapyError, ValueError) as exc:
        log.warning("critique protocol degraded: %s", exc)
        transcript.degraded = True
        transcript.termination = "round_cap"
        return response, transcript


def _default_initial_messages(task: str, context: str) -> list[ChatMessage]:
    if task == "eda_turn":
        return [ChatMessage("system", prompts.load("eda_system").template),
                ChatMessage("user", context)]
    return [ChatMessage("system",
                        prompts.render("story_system", max_annotations="2")),
            ChatMessage("user", context)]


def _initial_response(task: str, gateway: Gateway,
                      messages: list[ChatMessage]) -> object:
    if task == "eda_turn":
        return gateway.request_envelope("initial_respondent", messages)
    draft = gateway.request_json("initial_respondent", messages,
                                 lambda obj: _parse_revised("story_draft", obj))
    return draft


def _critic_wave(task: str, context: str, config: ProtocolConfig,
                 gateway: Gateway, response, rationale_history: list[str],
                 figure) -> list[Critique]:
    # Critics are independent within a wave (none sees another's critique).
    # They run sequentially in a fixed role order so scripted transcripts are
    # deterministic; the wave still counts as a single latency barrier.
    critiques = []
    for role in _critics_for(config):
        body = [f"Task context:\n{context}",
                f"Candidate response:\n{_serialize_response(task, response)}"]
        if rationale_history:
            body.append("Rationales for previously rejected critiques:\n"
                        + "\n".join(rationale_history))
        images = []
        if role == "critic_visualization" and config.include_images and figure:
            images = [figure]
        messages = [
            ChatMessage("system", prompts.render("critic_system",
                                                 focus=CRITIC_FOCUS[role])),
            ChatMessage("user", "\n\n".join(body), images=images),
        ]
        obj = gateway.request_json(role, messages, _validate_critique)
        applicable = obj["applicable"]
        items = [CritiqueItem(i["issue"], i["suggestion"])
                 for i in obj.get("items", [])]
        if not applicable:
            # abstention counts as consent
            critiques.append(Critique(role=role, applicable=False, ready=True))
        else:
            critiques.append(Critique(role=role, applicable=True,
                                      ready=obj["ready"], items=items))
    return critiques


def _refiner_wave(task: str, context: str, gateway: Gateway, response,
                  critiques: list[Critique]) -> RefinerDecision:
    refs = {}
    lines = []
    for critique in critiques:
        if not critique.applicable:
            continue
        for i, item in enumerate(critique.items):
            ref = f"{critique.role}:{i}"
            refs[ref] = item
            lines.append(f"[{ref}] issue: {item.issue}\n"
                         f"    suggestion: {item.suggestion}")

    def validate(obj: dict) -> None:
        accepted = obj.get("accepted", [])
        rejected = obj.get("rejected", [])
        if not isinstance(accepted, list) or not isinstance(rejected, list):
            raise ValueError('"accepted" and "rejected" must be lists')
        covered = set(accepted)
        for rej in rejected:
            if not isinstance(rej, dict) or not rej.get("ref"):
                raise ValueError("each rejection needs a ref")
            if not rej.get("rationale"):
                raise ValueError(f'rejection of {rej.get("ref")!r} has no rationale')
            covered.add(rej["ref"])
        missing = set(refs) - covered
        if missing:
            raise ValueError(f"critique items not addressed: {sorted(missing)}")
        _parse_revised(task, obj.get("revised"))

    messages = [
        ChatMessage("system", prompts.render(
            "refiner_system", revised_schema=REVISED_SCHEMA[task])),
        ChatMessage("user", "\n\n".join([
            f"Task context:\n{context}",
            f"Candidate response:\n{_serialize_response(task, response)}",
            "Critiques:\n" + ("\n".join(lines) or "(none)"),
        ])),
    ]
    obj = gateway.request_json("refiner", messages, validate)
    return RefinerDecision(
        accepted=list(obj.get("accepted", [])),
        rejected=[RejectedItem(r["ref"], r["rationale"])
                  for r in obj.get("rejected", [])],
        revised=_parse_revised(task, obj.get("revised")),
    )
