"""Language-model backends behind one interface.

Two backends share the ``complete`` contract: a chat-completions-compatible
HTTP client for real deployments and a scripted mock that answers from a
fixture file, by exact request digest first and per-role FIFO queue second.
The scripted backend never fabricates a reply. Every ``complete`` call
appends exactly one record to the call log, retries included.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from collections import deque
from dataclasses import dataclass
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Callable

import httpx

from .errors import (
    BackendTimeout,
    BackendUnreachable,
    FixtureParse,
    SchemaViolation,
    ScriptExhausted,
)


class Role(str, Enum):
    ORCHESTRATOR = "Orchestrator"
    NOTE_AGENT = "NoteAgent"
    STRUCTURED_AGENT = "StructuredAgent"
    COMPOSER = "Composer"
    JUDGE_ENTAILMENT = "JudgeEntailment"
    JUDGE_CLASSIFICATION = "JudgeClassification"
    CATEGORIZER = "Categorizer"


#: Roles whose sampling temperature is pinned to 0 on real backends, so
#: adjudication and categorization stay reproducible.
DETERMINISTIC_ROLES = frozenset({Role.JUDGE_ENTAILMENT, Role.JUDGE_CLASSIFICATION, Role.CATEGORIZER})


class ResponseFormat(str, Enum):
    FREE_TEXT = "FreeText"
    JSON_OBJECT = "JsonObject"


@dataclass(frozen=True)
class LmRequest:
    role_tag: Role
    system_text: str
    messages: tuple[tuple[str, str], ...]
    response_format_hint: ResponseFormat = ResponseFormat.FREE_TEXT

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("message list must be non-empty")


@dataclass(frozen=True)
class LmResponse:
    text: str
    finish_reason: str = "stop"
    latency: float = 0.0
    token_usage: dict[str, int] | None = None


def request_digest(request: LmRequest) -> str:
    """Stable digest over system text and concatenated messages."""
    hasher = hashlib.sha256()
    hasher.update(request.system_text.encode("utf-8"))
    for speaker, text in request.messages:
        hasher.update(b"\x1e")
        hasher.update(speaker.encode("utf-8"))
        hasher.update(b"\x1f")
        hasher.update(text.encode("utf-8"))
    return hasher.hexdigest()


#: Optional reply check: receives the parsed JSON object (JsonObject hint)
#: or the raw text, returns an error description or None.
ReplyCheck = Callable[[Any], str | None]


def _check_reply(request: LmRequest, text: str, check: ReplyCheck | None) -> str | None:
    payload: Any = text
    if request.response_format_hint is ResponseFormat.JSON_OBJECT:
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            return f"not a JSON object: {exc}"
        if not isinstance(payload, dict):
            return "reply is JSON but not a single object"
    if check is not None:
        return check(payload)
    return None


class LlmBackend:
    """Shared completion entry point; subclasses provide the transport."""

    def __init__(self, log_path: str | Path | None = None) -> None:
        self.call_log: list[dict[str, Any]] = []
        self._log_path = Path(log_path) if log_path else None
        self._log_lock = threading.Lock()

    def _reply(self, request: LmRequest) -> LmResponse:
        raise NotImplementedError

    def complete(self, request: LmRequest, check: ReplyCheck | None = None) -> LmResponse:
        """Answer a request, enforcing the response schema with one retry.

        A JsonObject hint requires the reply to parse as a single JSON
        object; ``check`` may impose a stricter shape. One violation
        triggers one retry, a second raises SchemaViolation. Exactly one
        log record is appended per call, whatever the outcome.
        """
        started = time.monotonic()
        last_error = ""
        outcome = LmResponse(text="", finish_reason="error")
        try:
            for _ in range(2):
                response = self._reply(request)
                last_error = _check_reply(request, response.text, check) or ""
                if not last_error:
                    outcome = response
                    return response
            raise SchemaViolation(f"{request.role_tag.value}: {last_error}")
        finally:
            self._append_log(request, outcome, time.monotonic() - started)

    def complete_json(self, request: LmRequest, check: ReplyCheck | None = None) -> dict[str, Any]:
        """complete() plus the parse the JsonObject contract guarantees."""
        return json.loads(self.complete(request, check=check).text)

    def _append_log(self, request: LmRequest, response: LmResponse, latency: float) -> None:
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "role_tag": request.role_tag.value,
            "request_digest": request_digest(request),
            "response_digest": hashlib.sha256(response.text.encode("utf-8")).hexdigest(),
            "latency": round(latency, 6),
        }
        with self._log_lock:
            self.call_log.append(record)
            if self._log_path is not None:
                with self._log_path.open("a", encoding="utf-8") as sink:
                    sink.write(json.dumps(record, ensure_ascii=False) + "\n")

    def calls_for(self, role: Role) -> int:
        with self._log_lock:
            return sum(1 for record in self.call_log if record["role_tag"] == role.value)


class ScriptedBackend(LlmBackend):
    """Deterministic mock answering from a fixture.

    Lookup order: exact (role, digest) match, then the role's FIFO queue.
    An unmatched request with an empty queue raises ScriptExhausted.
    Exact entries are reusable; queue entries are consumed. Calls are
    serialized so queue semantics stay well-defined across threads.
    """

    def __init__(
        self,
        exact: dict[tuple[str, str], str] | None = None,
        queues: dict[str, list[str]] | None = None,
        log_path: str | Path | None = None,
    ) -> None:
        super().__init__(log_path=log_path)
        self._exact = dict(exact or {})
        self._queues = {role: deque(replies) for role, replies in (queues or {}).items()}
        self._script_lock = threading.Lock()

    @classmethod
    def from_dict(cls, data: dict[str, Any], log_path: str | Path | None = None) -> "ScriptedBackend":
        if not isinstance(data, dict):
            raise FixtureParse("fixture must be a JSON object")
        exact: dict[tuple[str, str], str] = {}
        for position, item in enumerate(data.get("exact", [])):
            if not isinstance(item, dict) or not {"role", "digest", "reply"} <= set(item):
                raise FixtureParse(f"exact entry {position} needs role, digest and reply")
            _require_role(item["role"])
            exact[(item["role"], item["digest"])] = str(item["reply"])
        queues: dict[str, list[str]] = {}
        for role, replies in data.get("queues", {}).items():
            _require_role(role)
            if not isinstance(replies, list):
                raise FixtureParse(f"queue for role {role!r} must be a list")
            queues[role] = [str(r) for r in replies]
        return cls(exact=exact, queues=queues, log_path=log_path)

    @classmethod
    def from_file(cls, path: str | Path, log_path: str | Path | None = None) -> "ScriptedBackend":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise FixtureParse(f"cannot read fixture {path}: {exc}") from exc
        return cls.from_dict(data, log_path=log_path)

    def _reply(self, request: LmRequest) -> LmResponse:
        role = request.role_tag.value
        digest = request_digest(request)
        with self._script_lock:
            if (role, digest) in self._exact:
                return LmResponse(text=self._exact[(role, digest)])
            queue = self._queues.get(role)
            if queue:
                return LmResponse(text=queue.popleft())
        raise ScriptExhausted(f"no scripted reply for role {role} (digest {digest[:12]})")


def _require_role(name: str) -> None:
    try:
        Role(name)
    except ValueError:
        raise FixtureParse(f"unknown role {name!r} in fixture") from None


class ChatCompletionsClient(LlmBackend):
    """Wire client for a chat-completions-style JSON-over-HTTP endpoint."""

    def __init__(
        self,
        base_url: str,
        model: str = "default",
        token: str | None = None,
        timeout: float = 60.0,
        temperature: float = 0.0,
        log_path: str | Path | None = None,
    ) -> None:
        super().__init__(log_path=log_path)
        self._url = base_url.rstrip("/") + "/chat/completions"
        self._model = model
        self._token = token
        self._timeout = timeout
        self._temperature = temperature

    def _reply(self, request: LmRequest) -> LmResponse:
        messages = [{"role": "system", "content": request.system_text}] if request.system_text else []
        messages += [{"role": speaker, "content": text} for speaker, text in request.messages]
        body: dict[str, Any] = {
            "model": self._model,
            "messages": messages,
            "temperature": 0.0 if request.role_tag in DETERMINISTIC_ROLES else self._temperature,
        }
        if request.response_format_hint is ResponseFormat.JSON_OBJECT:
            body["response_format"] = {"type": "json_object"}
        headers = {"Authorization": f"Bearer {self._token}"} if self._token else {}
        started = time.monotonic()
        try:
            reply = httpx.post(self._url, json=body, headers=headers, timeout=self._timeout)
            reply.raise_for_status()
            parsed = reply.json()
            choice = parsed["choices"][0]
            return LmResponse(
                text=choice["message"]["content"],
                finish_reason=choice.get("finish_reason", "stop"),
                latency=time.monotonic() - started,
                token_usage=parsed.get("usage"),
            )
        except httpx.TimeoutException as exc:
            raise BackendTimeout(str(exc)) from exc
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise BackendUnreachable(f"{self._url}: {exc}") from exc
