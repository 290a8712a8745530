"""Provider-agnostic chat-completion client with structured-envelope parsing.

Three providers: OpenAI-compatible, Anthropic-compatible, and a deterministic
scripted stub driven by a transcript file. The stub is what every orchestration
test runs against: each transcript entry may assert a substring that must
appear in the outgoing prompt, then yields a canned reply.
"""

from __future__ import annotations

import base64
import json
import logging
import os
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import httpx

from .errors import (
    EnvelopeParseError,
    ProviderError,
    StubAssertionError,
    StubExhausted,
    TransportError,
)

log = logging.getLogger(__name__)

MAX_TRANSPORT_RETRIES = 2


@dataclass
class ChatMessage:
    role: str  # system | user | assistant
    content: str
    images: list[tuple[str, bytes]] = field(default_factory=list)  # (mime, data)

    def __post_init__(self):
        if not self.content and not self.images:
            raise ValueError("message needs content or an attachment")


@dataclass(frozen=True)
class ModelRef:
    provider: str  # openai_compatible | anthropic_compatible | scripted
    model_name: str  # for scripted: path to the transcript file


@dataclass
class AgentEnvelope:
    cell_kind: str  # code | markdown
    content: str
    done: bool

    def to_json(self) -> str:
        return json.dumps({"type": self.cell_kind, "content": self.content,
                           "done": self.done})


@dataclass
class CallRecord:
    role_tag: str
    duration_ms: int


class CallLedger:
    """Append-only log of successful completion calls."""

    def __init__(self):
        self._lock = threading.Lock()
        self._records: list[CallRecord] = []

    def record(self, role_tag: str, duration_ms: int) -> None:
        with self._lock:
            self._records.append(CallRecord(role_tag, duration_ms))

    @property
    def count(self) -> int:
        with self._lock:
            return len(self._records)

    def count_for(self, role_tag: str) -> int:
        with self._lock:
            return sum(1 for r in self._records if r.role_tag == role_tag)

    def snapshot(self) -> list[CallRecord]:
        with self._lock:
            return list(self._records)


class ScriptedProvider:
    """Replays a transcript: JSON array of {expect_substring?, reply, delay_ms?}.

    Strictly sequential; one consumer at a time per transcript.
    """

    def __init__(self, path: str):
        self.path = path
        with open(path, encoding="utf-8") as fh:
            self.entries = json.load(fh)
        if not isinstance(self.entries, list):
            raise ProviderError(f"transcript {path} is not a JSON array")
        self._cursor = 0
        self._lock = threading.Lock()

    def complete(self, model_name: str, messages: list[ChatMessage]) -> str:
        with self._lock:
            if self._cursor >= len(self.entries):
                raise StubExhausted(f"transcript {self.path} exhausted "
                                    f"after {self._cursor} entries")
            entry = self.entries[self._cursor]
            self._cursor += 1
        expect = entry.get("expect_substring")
        if expect is not None:
            prompt = "\n".join(m.content for m in messages)
            if expect not in prompt:
                raise StubAssertionError(
                    f"transcript {self.path} entry {self._cursor - 1}: "
                    f"expected substring not in prompt: {expect!r}")
        delay_ms = entry.get("delay_ms", 0)
        if delay_ms:
            time.sleep(delay_ms / 1000.0)
        return entry["reply"]


class OpenAIProvider:
    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None):
        self.base_url = (base_url or os.environ.get("CAPY_OPENAI_BASE",
                                                    "https://api.openai.com/v1")).rstrip("/")
        self.api_key = api_key or os.environ.get("CAPY_OPENAI_KEY", "")

    def complete(self, model_name: str, messages: list[ChatMessage]) -> str:
        payload_messages = []
        for m in messages:
            if m.images:
                content: list[dict] = [{"type": "text", "text": m.content}]
                for mime, data in m.images:
                    b64 = base64.b64encode(data).decode()
                    content.append({"type": "image_url",
                                    "image_url": {"url": f"data:{mime};base64,{b64}"}})
                payload_messages.append({"role": m.role, "content": content})
            else:
                payload_messages.append({"role": m.role, "content": m.content})
        try:
            resp = httpx.post(
                f"{self.base_url}/chat/completions",
                headers={"Authorization": f"Bearer {self.api_key}"},
                json={"model": model_name, "messages": payload_messages},
                timeout=120,
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc


class AnthropicProvider:
    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None):
        self.base_url = (base_url or os.environ.get("CAPY_ANTHROPIC_BASE",
                                                    "https://api.anthropic.com")).rstrip("/")
        self.api_key = api_key or os.environ.get("CAPY_ANTHROPIC_KEY", "")

    def complete(self, model_name: str, messages: list[ChatMessage]) -> str:
        system_parts = [m.content for m in messages if m.role == "system"]
        payload_messages = []
        for m in messages:
            if m.role == "system":
                continue
            if m.images:
                content: list[dict] = [{"type": "text", "text": m.content}]
                for mime, data in m.images:
                    content.append({"type": "image", "source": {
                        "type": "base64", "media_type": mime,
                        "data": base64.b64encode(data).decode()}})
                payload_messages.append({"role": m.role, "content": content})
            else:
                payload_messages.append({"role": m.role, "content": m.content})
        body = {"model": model_name, "max_tokens": 4096, "messages": payload_messages}
        if system_parts:
            body["system"] = "\n\n".join(system_parts)
        try:
            resp = httpx.post(
                f"{self.base_url}/v1/messages",
                headers={"x-api-key": self.api_key,
                         "anthropic-version": "2023-06-01"},
                json=body,
                timeout=120,
            )
        except httpx.HTTPError as exc:
            raise TransportError(str(exc)) from exc
        if resp.status_code >= 500:
            raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            return "".join(part.get("text", "")
                           for part in resp.json()["content"])
        except (KeyError, ValueError) as exc:
            raise ProviderError(f"malformed completion response: {exc}") from exc


class Gateway:
    """Routes completion calls per agent role and records them in a ledger.

    Scripted providers are cached per transcript path so one transcript can
    drive an entire multi-agent run in order.
    """

    def __init__(self, model_by_role: dict[str, ModelRef],
                 ledger: Optional[CallLedger] = None):
        self.model_by_role = dict(model_by_role)
        self.ledger = ledger or CallLedger()
        self._providers: dict[tuple[str, str], object] = {}
        self._lock = threading.Lock()

    def model_for(self, role: str) -> ModelRef:
        try:
            return self.model_by_role[role]
        except KeyError:
            raise ProviderError(f"no model configured for role {role!r}") from None

    def _provider(self, ref: ModelRef):
        key = (ref.provider, ref.model_name if ref.provider == "scripted" else "")
        with self._lock:
            if key not in self._providers:
                if ref.provider == "scripted":
                    if not ref.model_name:
                        raise ProviderError("scripted provider requires a transcript path")
                    self._providers[key] = ScriptedProvider(ref.model_name)
                elif ref.provider == "openai_compatible":
                    self._providers[key] = OpenAIProvider()
                elif ref.provider == "anthropic_compatible":
                    self._providers[key] = AnthropicProvider()
                else:
                    raise ProviderError(f"unknown provider {ref.provider!r}")
            return self._providers[key]

    def complete(self, role: str, messages: list[ChatMessage]) -> str:
        if not messages:
            raise ValueError("messages must be nonempty")
        ref = self.model_for(role)
        provider = self._provider(ref)
        attempts = 0
        while True:
            start = time.monotonic()
            try:
                text = provider.complete(ref.model_name, messages)
            except TransportError as exc:
                attempts += 1
                if not getattr(exc, "retryable", True) or attempts > MAX_TRANSPORT_RETRIES:
                    raise
                log.warning("transport error for role %s (attempt %d): %s",
                            role, attempts, exc)
                time.sleep(0.2 * attempts)
                continue
            self.ledger.record(role, int((time.monotonic() - start) * 1000))
            return text

    def request_envelope(self, role: str, messages: list[ChatMessage]) -> AgentEnvelope:
        """complete + parse, with exactly one schema-restating repair re-ask."""
        raw = self.complete(role, messages)
        try:
            return parse_envelope(raw)
        except EnvelopeParseError:
            repair = messages + [
                ChatMessage(role="assistant", content=raw),
                ChatMessage(role="system", content=ENVELOPE_REPAIR_PROMPT),
            ]
            return parse_envelope(self.complete(role, repair))

    def request_json(self, role: str, messages: list[ChatMessage],
                     validate: Callable[[dict], None]) -> dict:
        """Structured-JSON request with the same one-repair policy as envelopes.

        `validate` raises ValueError on schema violations; its message is fed
        back to the model on the single repair attempt.
        """
        raw = self.complete(role, messages)
        try:
            obj = extract_json_object(raw)
            validate(obj)
            return obj
        except (EnvelopeParseError, ValueError) as exc:
            repair = messages + [
                ChatMessage(role="assistant", content=raw),
                ChatMessage(role="system",
                            content=f"Your previous reply was invalid: {exc}. "
                                    "Reply again with exactly one valid JSON object "
                                    "and no surrounding prose."),
            ]
            raw = self.complete(role, repair)
            obj = extract_json_object(raw)
            validate(obj)  # ValueError here propagates to the caller
            return obj


ENVELOPE_REPAIR_PROMPT = (
    "Your previous reply could not be parsed. Respond with exactly one JSON object "
    'of the form {"type": "code" or "markdown", "content": "<cell content>", '
    '"done": true or false} and nothing else.'
)


def _strip_fences(raw: str) -> str:
    text = raw.strip()
    if text.startswith("```"):
        first_newline = text.find("\n")
        if first_newline != -1 and text.rstrip().endswith("```"):
            return text[first_newline + 1:].rstrip().removesuffix("```")
    return raw


def _candidate_objects(raw: str):
    """Yield parseable top-level JSON objects embedded in raw text, in order."""
    text = _strip_fences(raw)
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"' and depth > 0:
            in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}" and depth > 0:
            depth -= 1
            if depth == 0:
                try:
                    yield json.loads(text[start:i + 1])
                except ValueError:
                    pass


def extract_json_object(raw: str) -> dict:
    for obj in _candidate_objects(raw):
        if isinstance(obj, dict):
            return obj
    raise EnvelopeParseError("no JSON object found in model reply")


def parse_envelope(raw: str) -> AgentEnvelope:
    """Extract the first envelope-shaped JSON object from a model reply."""
    for obj in _candidate_objects(raw):
        if not isinstance(obj, dict):
            continue
        kind = obj.get("type")
        content = obj.get("content")
        done = obj.get("done")
        if kind in ("code", "markdown") and isinstance(content, str) and content \
                and isinstance(done, bool):
            return AgentEnvelope(cell_kind=kind, content=content, done=done)
    raise EnvelopeParseError("no recoverable envelope in model reply")
