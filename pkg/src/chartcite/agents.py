"""Query planning and provenance-tagged retrieval agents.

The planner LLM proposes a tool list; the engine decides the path
mechanically (Fast iff the plan is exactly one NoteAgent step) so routing
stays auditable. Retrieval agents never trust LLM text as evidence: quoted
passages must match the source verbatim to become spans, and structured
filters are executed by engine code against the snapshot.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable

from . import prompts
from .errors import (
    AllStepsFailed,
    EmptyQuery,
    FilterParse,
    GatewayError,
    PlanParse,
    SchemaViolation,
)
from .llm import LlmBackend, LmRequest, ResponseFormat, Role
from .records import (
    FilterCriteria,
    Resource,
    ResourceKind,
    Snapshot,
    Span,
    byte_len,
    format_instant,
    parse_instant,
    slice_bytes,
)

logger = logging.getLogger(__name__)


class PlanPath(str, Enum):
    FAST = "Fast"
    SLOW = "Slow"


class Tool(str, Enum):
    NOTE_AGENT = "NoteAgent"
    LAB_AGENT = "LabAgent"
    MED_AGENT = "MedAgent"
    VITALS_AGENT = "VitalsAgent"
    UPLOAD_AGENT = "UploadAgent"


#: Resource kinds each tool may read.
TOOL_KINDS: dict[Tool, frozenset[ResourceKind]] = {
    Tool.NOTE_AGENT: frozenset({ResourceKind.NOTE, ResourceKind.DIAGNOSTIC_REPORT,
                                ResourceKind.PATHOLOGY_REPORT}),
    Tool.LAB_AGENT: frozenset({ResourceKind.LAB_RESULT}),
    Tool.MED_AGENT: frozenset({ResourceKind.MEDICATION_ORDER}),
    Tool.VITALS_AGENT: frozenset({ResourceKind.VITAL_SIGN}),
    Tool.UPLOAD_AGENT: frozenset({ResourceKind.UPLOADED_DOCUMENT}),
}


@dataclass(frozen=True)
class PlanStep:
    tool: Tool
    args: str


@dataclass(frozen=True)
class QueryPlan:
    path: PlanPath
    steps: tuple[PlanStep, ...]
    plan_rationale: str

    def __post_init__(self) -> None:
        if not self.steps:
            raise ValueError("a plan needs at least one step")
        if self.path is PlanPath.FAST:
            if len(self.steps) != 1 or self.steps[0].tool is not Tool.NOTE_AGENT:
                raise ValueError("a Fast plan is exactly one NoteAgent step")
        pairs = [(s.tool, s.args) for s in self.steps]
        if len(pairs) != len(set(pairs)):
            raise ValueError("duplicate (tool, args) pair in plan")

    def to_dict(self) -> dict[str, Any]:
        return {
            "path": self.path.value,
            "steps": [{"tool": s.tool.value, "args": s.args} for s in self.steps],
            "plan_rationale": self.plan_rationale,
        }


@dataclass(frozen=True)
class EvidenceItem:
    resource_id: str
    span: Span
    snippet: str
    producing_tool: Tool

    def to_dict(self) -> dict[str, Any]:
        return {
            "resource_id": self.resource_id,
            "span": {"start": self.span.start, "end": self.span.end},
            "snippet": self.snippet,
            "producing_tool": self.producing_tool.value,
        }


@dataclass
class StepStatus:
    tool: Tool
    args: str
    status: str  # "ok" | "no sources" | "failed"
    detail: str = ""
    items_found: int = 0
    dropped: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {"tool": self.tool.value, "args": self.args, "status": self.status,
                "detail": self.detail, "items_found": self.items_found, "dropped": self.dropped}


@dataclass
class EvidenceBundle:
    items: tuple[EvidenceItem, ...]
    steps: tuple[StepStatus, ...]


@dataclass
class AgentResult:
    items: list[EvidenceItem] = field(default_factory=list)
    dropped: int = 0


def _resource_summary(snapshot: Snapshot, criteria: FilterCriteria) -> str:
    counts: dict[ResourceKind, int] = {}
    for resource in snapshot.filter(criteria):
        counts[resource.kind] = counts.get(resource.kind, 0) + 1
    lines = [f"- {kind.value}: {counts[kind]}" for kind in ResourceKind if counts.get(kind)]
    return "\n".join(lines) if lines else "- (no records in scope)"


def build_plan(query: str, snapshot: Snapshot, criteria: FilterCriteria,
               backend: LlmBackend) -> QueryPlan:
    """Ask the planner for a tool list and turn it into a validated plan."""
    query = query.strip()
    if not query:
        raise EmptyQuery("query is empty after trimming")
    prompt = prompts.build_planner_prompt(query=query,
                                          resource_summary=_resource_summary(snapshot, criteria))
    request = LmRequest(role_tag=Role.ORCHESTRATOR, system_text="",
                        messages=(("user", prompt),),
                        response_format_hint=ResponseFormat.JSON_OBJECT)
    try:
        reply = backend.complete_json(request)
    except SchemaViolation as exc:
        raise PlanParse(str(exc)) from exc

    tools = reply.get("tools")
    if not isinstance(tools, list) or not tools:
        raise PlanParse("planner reply needs a non-empty tools array")
    steps: list[PlanStep] = []
    for item in tools:
        if not isinstance(item, dict) or not isinstance(item.get("args"), str):
            raise PlanParse(f"bad plan step: {item!r}")
        try:
            tool = Tool(item.get("tool"))
        except ValueError:
            raise PlanParse(f"unknown tool {item.get('tool')!r}") from None
        steps.append(PlanStep(tool=tool, args=item["args"]))
    path = PlanPath.FAST if len(steps) == 1 and steps[0].tool is Tool.NOTE_AGENT else PlanPath.SLOW
    rationale = reply.get("rationale", "")
    if not isinstance(rationale, str):
        raise PlanParse("rationale must be a string")
    try:
        return QueryPlan(path=path, steps=tuple(steps), plan_rationale=rationale)
    except ValueError as exc:
        raise PlanParse(str(exc)) from exc


def _char_to_byte_span(text: str, char_start: int, quote: str) -> Span:
    start = byte_len(text[:char_start])
    return Span(start, start + byte_len(quote))


def locate_passage(resource: Resource, quote: str) -> Span | None:
    """Exact-match search; earliest occurrence wins. None when absent."""
    if not quote:
        return None
    index = resource.canonical_text.find(quote)
    if index < 0:
        return None
    return _char_to_byte_span(resource.canonical_text, index, quote)


def _render_documents(notes: list[Resource]) -> str:
    parts = []
    for note in notes:
        stamp = format_instant(note.timestamp) if note.timestamp else ""
        note_type = f' type="{note.note_type}"' if note.note_type else ""
        parts.append(f'<document id="{note.id}" kind="{note.kind.value}"{note_type} '
                     f'timestamp="{stamp}">\n{note.canonical_text}\n</document>')
    return "\n\n".join(parts)


def note_agent(query: str, notes: list[Resource], backend: LlmBackend) -> AgentResult:
    """Select verbatim passages from narrative resources.

    Passages that cannot be located exactly in their source are dropped and
    counted — fabricated text never becomes evidence. Zero notes means zero
    items with no backend call.
    """
    if not notes:
        return AgentResult()
    prompt = prompts.build_note_agent_prompt(query=query, documents=_render_documents(notes))
    request = LmRequest(role_tag=Role.NOTE_AGENT, system_text="",
                        messages=(("user", prompt),),
                        response_format_hint=ResponseFormat.JSON_OBJECT)
    reply = backend.complete_json(request)
    by_id = {note.id: note for note in notes}
    result = AgentResult()
    passages = reply.get("passages")
    if not isinstance(passages, list):
        passages = []
    for passage in passages:
        if not isinstance(passage, dict):
            result.dropped += 1
            continue
        resource = by_id.get(passage.get("resource_id"))
        quote = passage.get("quote")
        span = locate_passage(resource, quote) if resource and isinstance(quote, str) else None
        if span is None:
            result.dropped += 1
            logger.warning("note agent dropped a passage not found verbatim: %r", quote)
            continue
        result.items.append(EvidenceItem(resource_id=resource.id, span=span,
                                         snippet=quote, producing_tool=Tool.NOTE_AGENT))
    return result


@dataclass(frozen=True)
class StructuredFilter:
    """Engine-executed filter proposed by a structured agent."""

    name_contains: tuple[str, ...] = ()
    time_start: Any = None
    time_end: Any = None
    top_k: int | None = None

    @classmethod
    def from_reply(cls, reply: dict[str, Any]) -> "StructuredFilter":
        names = reply.get("name_contains", [])
        if names is None:
            names = []
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise FilterParse("name_contains must be a list of strings")
        bounds = []
        for key in ("time_start", "time_end"):
            raw = reply.get(key)
            if raw is None:
                bounds.append(None)
                continue
            try:
                bounds.append(parse_instant(raw))
            except ValueError as exc:
                raise FilterParse(f"{key}: {exc}") from exc
        top_k = reply.get("top_k")
        if top_k is not None and (not isinstance(top_k, int) or isinstance(top_k, bool) or top_k < 1):
            raise FilterParse("top_k must be a positive integer or null")
        return cls(name_contains=tuple(names), time_start=bounds[0],
                   time_end=bounds[1], top_k=top_k)

    def apply(self, resources: list[Resource]) -> list[Resource]:
        needles = [n.lower() for n in self.name_contains]
        selected = []
        for resource in resources:
            name = str(resource.payload.get("name") or resource.payload.get("title") or "")
            if needles and not any(n in name.lower() for n in needles):
                continue
            if self.time_start is not None and (resource.timestamp is None
                                                or resource.timestamp < self.time_start):
                continue
            if self.time_end is not None and (resource.timestamp is None
                                              or resource.timestamp > self.time_end):
                continue
            selected.append(resource)
        return selected[: self.top_k] if self.top_k else selected


def _render_records(resources: list[Resource]) -> str:
    lines = []
    for resource in resources:
        summary = " | ".join(resource.canonical_text.splitlines()) or "(empty)"
        lines.append(f"{resource.id}: {summary}")
    return "\n".join(lines)


def structured_agent(tool: Tool, query: str, resources: list[Resource],
                     backend: LlmBackend) -> AgentResult:
    """Filter structured records; evidence spans cover the whole rendered text."""
    if any(resource.kind not in TOOL_KINDS[tool] for resource in resources):
        raise ValueError(f"resource kind outside {tool.value} scope")
    if not resources:
        return AgentResult()
    prompt = prompts.build_structured_agent_prompt(query=query, records=_render_records(resources))
    request = LmRequest(role_tag=Role.STRUCTURED_AGENT, system_text="",
                        messages=(("user", prompt),),
                        response_format_hint=ResponseFormat.JSON_OBJECT)
    try:
        reply = backend.complete_json(request)
    except SchemaViolation as exc:
        raise FilterParse(str(exc)) from exc
    chosen = StructuredFilter.from_reply(reply).apply(resources)
    result = AgentResult()
    for resource in chosen:
        text = resource.canonical_text
        if not text:
            continue
        result.items.append(EvidenceItem(resource_id=resource.id,
                                         span=Span(0, byte_len(text)),
                                         snippet=text, producing_tool=tool))
    return result


def _validate_item(item: EvidenceItem, snapshot: Snapshot) -> None:
    resource = snapshot.get(item.resource_id)
    if resource is None:
        raise ValueError(f"evidence references {item.resource_id!r} outside the snapshot")
    if slice_bytes(resource.canonical_text, item.span) != item.snippet:
        raise ValueError(f"evidence snippet for {item.resource_id!r} is not span-exact")


def execute_plan(plan: QueryPlan, snapshot: Snapshot, criteria: FilterCriteria,
                 backend: LlmBackend,
                 on_event: Callable[[str, StepStatus], None] | None = None) -> EvidenceBundle:
    """Run each step in order; failures degrade to recorded step statuses.

    The merged bundle is deduplicated on (resource_id, span) and sorted by
    (resource_id, span.start, span.end) so merge order never shows through.
    Raises AllStepsFailed only when every step failed.
    """
    statuses: list[StepStatus] = []
    collected: list[EvidenceItem] = []
    for step in plan.steps:
        status = StepStatus(tool=step.tool, args=step.args, status="ok")
        if on_event:
            on_event("step_started", status)
        scoped = snapshot.filter(criteria.restrict_kinds(TOOL_KINDS[step.tool]))
        try:
            if not scoped:
                status.status = "no sources"
            else:
                if step.tool is Tool.NOTE_AGENT:
                    result = note_agent(step.args or "", scoped, backend)
                else:
                    result = structured_agent(step.tool, step.args or "", scoped, backend)
                for item in result.items:
                    _validate_item(item, snapshot)
                collected.extend(result.items)
                status.items_found = len(result.items)
                status.dropped = result.dropped
        except (GatewayError, FilterParse, ValueError) as exc:
            status.status = "failed"
            status.detail = f"{type(exc).__name__}: {exc}"
            logger.warning("plan step %s failed: %s", step.tool.value, status.detail)
        statuses.append(status)
        if on_event:
            on_event("step_finished", status)

    if statuses and all(s.status == "failed" for s in statuses):
        raise AllStepsFailed("; ".join(s.detail for s in statuses))

    unique: dict[tuple[str, Span], EvidenceItem] = {}
    for item in collected:
        unique.setdefault((item.resource_id, item.span), item)
    ordered = sorted(unique.values(), key=lambda i: (i.resource_id, i.span.start, i.span.end))
    return EvidenceBundle(items=tuple(ordered), steps=tuple(statuses))
