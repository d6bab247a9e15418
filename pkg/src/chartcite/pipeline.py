"""The one query pipeline shared by the HTTP service and the CLI.

plan -> execute -> compose -> guardrails -> citation gate. No caller ever
receives a Passed answer that fails citation closure; the gate raises
instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from .agents import EvidenceBundle, QueryPlan, StepStatus, build_plan, execute_plan
from .errors import ChartCiteError
from .llm import LlmBackend
from .records import FilterCriteria, Snapshot
from .synthesis import Answer, apply_guardrails, compose_answer, validate_citations


class CitationClosureError(ChartCiteError):
    """Internal gate tripped: a composed answer failed citation closure."""


@dataclass
class QueryResult:
    plan: QueryPlan
    evidence: EvidenceBundle
    answer: Answer


def run_query(
    snapshot: Snapshot,
    query: str,
    criteria: FilterCriteria,
    backend: LlmBackend,
    format_tag: str = "summary",
    strict: bool = True,
    known_patient_ids: frozenset[str] | set[str] = frozenset(),
    on_event: Callable[[str, StepStatus], None] | None = None,
) -> QueryResult:
    plan = build_plan(query, snapshot, criteria, backend)
    evidence = execute_plan(plan, snapshot, criteria, backend, on_event=on_event)
    answer = compose_answer(query, evidence, format_tag, backend,
                            patient_id=snapshot.patient_id, strict=strict)
    answer = apply_guardrails(answer, query, known_patient_ids=known_patient_ids)
    if answer.guardrail_status.passed:
        report = validate_citations(answer, snapshot)
        if not report.closed:
            raise CitationClosureError(
                f"answer {answer.id} failed closure: {report.to_dict()}")
    return QueryResult(plan=plan, evidence=evidence, answer=answer)
