"""Automated quality monitoring over composed answers.

Answers are segmented into claims and judged in two stages: first against
only the cited evidence-card contexts, then — for anything not entailed —
against the full text of every resource the answer cites anywhere. Segments
entailed at stage one are never re-judged. Unsupported segments are
classified as hallucinations (no basis in the chart) or inaccuracies
(contradicting the chart), and each output gets a 1–5 risk level.

Per-output rates keep exact rationals internally; display strings truncate
at two decimals, which is what reproduces the published monitoring figures.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Any, Iterable, Mapping

from . import prompts
from .errors import EmptyInput, GatewayError, IndexMismatch, RiskOutOfRange
from .llm import LlmBackend, LmRequest, ResponseFormat, Role
from .records import Snapshot
from .synthesis import NO_SUPPORT_DISCLAIMER, Answer, Citation, evidence_card

DISCLAIMER_EXPLANATION = "Standardized no-data disclaimer; carries no clinical fact to verify."

_SENTENCE_BOUNDARY = re.compile(r"(?<=[.!?])\s+")


class Stage(str, Enum):
    CITED_SPANS = "CitedSpans"
    FULL_DOCUMENTS = "FullDocuments"


class ErrorCategory(str, Enum):
    HALLUCINATION = "Hallucination"
    INACCURACY = "Inaccuracy"


@dataclass(frozen=True)
class ClaimSegment:
    text: str
    answer_id: str
    index: int
    citations: tuple[Citation, ...]


@dataclass
class VerdictRecord:
    segment_index: int
    stage_reached: Stage
    entailed: bool
    judge_explanation: str
    category: ErrorCategory | None = None
    unevaluated: bool = False

    def label(self) -> str:
        if self.unevaluated:
            return "unevaluated"
        if self.entailed:
            return "supported"
        return self.category.value.lower() if self.category else "unsupported"

    def to_dict(self) -> dict[str, Any]:
        return {
            "segment_index": self.segment_index,
            "stage_reached": self.stage_reached.value,
            "entailed": self.entailed,
            "judge_explanation": self.judge_explanation,
            "category": self.category.value if self.category else None,
            "unevaluated": self.unevaluated,
        }


@dataclass
class OutputAssessment:
    answer_id: str
    verdicts: list[VerdictRecord]
    risk_level: int
    explanation: str
    inaccuracies: list[str]
    hallucinations: list[str]

    @property
    def unevaluated_count(self) -> int:
        return sum(1 for v in self.verdicts if v.unevaluated)

    @property
    def unsupported_count(self) -> int:
        return sum(1 for v in self.verdicts if not v.unevaluated and not v.entailed)

    @property
    def clean(self) -> bool:
        return self.unsupported_count == 0 and not self.inaccuracies and not self.hallucinations

    def verdict_vector(self) -> list[str]:
        return [v.label() for v in self.verdicts]

    def to_dict(self) -> dict[str, Any]:
        return {
            "answer_id": self.answer_id,
            "risk_level": self.risk_level,
            "explanation": self.explanation,
            "inaccuracies": self.inaccuracies,
            "hallucinations": self.hallucinations,
            "unevaluated_count": self.unevaluated_count,
            "verdicts": [v.to_dict() for v in self.verdicts],
        }


def truncate_rate(value: Fraction, decimals: int = 2) -> str:
    """Truncate-toward-zero display; 27/70 renders as 0.38."""
    scale = 10 ** decimals
    whole, part = divmod(int(value * scale), scale)
    return f"{whole}.{part:0{decimals}d}"


def truncate_percent(value: Fraction) -> str:
    return f"{int(value * 100)}%"


@dataclass
class MonitorReport:
    outputs_evaluated: int
    total_hallucinations: int
    total_inaccuracies: int
    clean_outputs: int
    unevaluated_segments: int = 0

    @property
    def hallucinations_per_output(self) -> Fraction:
        return Fraction(self.total_hallucinations, self.outputs_evaluated)

    @property
    def inaccuracies_per_output(self) -> Fraction:
        return Fraction(self.total_inaccuracies, self.outputs_evaluated)

    @property
    def clean_output_fraction(self) -> Fraction:
        return Fraction(self.clean_outputs, self.outputs_evaluated)

    def to_dict(self) -> dict[str, Any]:
        return {
            "type": "monitor_report",
            "outputs_evaluated": self.outputs_evaluated,
            "total_hallucinations": self.total_hallucinations,
            "total_inaccuracies": self.total_inaccuracies,
            "clean_outputs": self.clean_outputs,
            "unevaluated_segments": self.unevaluated_segments,
            "hallucinations_per_output": truncate_rate(self.hallucinations_per_output),
            "inaccuracies_per_output": truncate_rate(self.inaccuracies_per_output),
            "clean_output_fraction": truncate_percent(self.clean_output_fraction),
            "hallucinations_per_output_exact": str(self.hallucinations_per_output),
            "inaccuracies_per_output_exact": str(self.inaccuracies_per_output),
            "clean_output_fraction_exact": str(self.clean_output_fraction),
        }


def segment_claims(answer: Answer) -> list[ClaimSegment]:
    """One segment per claim, splitting claims with several sentence ends.

    Each split part inherits the whole claim's citations. Blocked answers
    violate the precondition and are rejected.
    """
    if not answer.guardrail_status.passed:
        raise ValueError("only Passed answers can be segmented")
    segments: list[ClaimSegment] = []
    for claim in answer.claims:
        parts = [p for p in _SENTENCE_BOUNDARY.split(claim.text) if p.strip()]
        if len(parts) <= 1:
            parts = [claim.text]
        for part in parts:
            segments.append(ClaimSegment(text=part, answer_id=answer.id,
                                         index=len(segments), citations=claim.citations))
    return segments


@dataclass
class EntailmentVerdict:
    entailed: bool
    explanation: str


def _entailment_check(payload: Any) -> str | None:
    if set(payload) != {"all_relevant_facts_entailed", "explanation"}:
        return 'reply must contain EXACTLY the keys "all_relevant_facts_entailed" and "explanation"'
    if not isinstance(payload["all_relevant_facts_entailed"], bool):
        return "all_relevant_facts_entailed must be a JSON boolean"
    if not isinstance(payload["explanation"], str):
        return "explanation must be a string"
    return None


def judge_entailment(segment_text: str, source_texts: list[str],
                     backend: LlmBackend) -> EntailmentVerdict:
    """Judge one segment against source chunks with the entailment prompt."""
    if not source_texts:
        raise ValueError("judge_entailment needs at least one source text")
    prompt = prompts.build_entailment_prompt(ai_content=segment_text, source_chunks=source_texts)
    request = LmRequest(role_tag=Role.JUDGE_ENTAILMENT, system_text="",
                        messages=(("user", prompt),),
                        response_format_hint=ResponseFormat.JSON_OBJECT)
    reply = backend.complete_json(request, check=_entailment_check)
    return EntailmentVerdict(entailed=reply["all_relevant_facts_entailed"],
                             explanation=reply["explanation"])


def _dedup(chunks: Iterable[str]) -> list[str]:
    seen: list[str] = []
    for chunk in chunks:
        if chunk not in seen:
            seen.append(chunk)
    return seen


def verify_output(answer: Answer, snapshot: Snapshot, backend: LlmBackend) -> list[VerdictRecord]:
    """Two-stage verification of a Passed answer.

    Stage one judges each segment against only its cited evidence-card
    contexts; stage two re-judges not-entailed segments against the full
    canonical text of every resource cited anywhere in the answer. Backend
    failures mark the affected segment unevaluated instead of aborting.
    """
    segments = segment_claims(answer)
    cited_ids = _dedup(c.resource_id for c in answer.citations())
    full_documents = [snapshot.get(rid).canonical_text for rid in cited_ids if snapshot.get(rid)]

    verdicts: list[VerdictRecord] = []
    for segment in segments:
        if not segment.citations and segment.text == NO_SUPPORT_DISCLAIMER:
            verdicts.append(VerdictRecord(segment_index=segment.index,
                                          stage_reached=Stage.CITED_SPANS, entailed=True,
                                          judge_explanation=DISCLAIMER_EXPLANATION))
            continue
        contexts = _dedup(evidence_card(c, snapshot).context_text for c in segment.citations)
        stage = Stage.CITED_SPANS
        try:
            verdict = judge_entailment(segment.text, contexts, backend)
            if not verdict.entailed:
                stage = Stage.FULL_DOCUMENTS
                verdict = judge_entailment(segment.text, full_documents, backend)
            verdicts.append(VerdictRecord(segment_index=segment.index, stage_reached=stage,
                                          entailed=verdict.entailed,
                                          judge_explanation=verdict.explanation))
        except GatewayError as exc:
            verdicts.append(VerdictRecord(segment_index=segment.index, stage_reached=stage,
                                          entailed=False, unevaluated=True,
                                          judge_explanation=f"{type(exc).__name__}: {exc}"))
    return verdicts


@dataclass
class ClassificationResult:
    risk_level: int
    explanation: str
    inaccuracies: list[str]
    hallucinations: list[str]


def _classification_check(payload: Any) -> str | None:
    if set(payload) != {"risk_level", "explanation", "inaccuracies", "hallucinations"}:
        return 'reply must contain EXACTLY the keys "risk_level", "explanation", "inaccuracies", "hallucinations"'
    if not isinstance(payload["risk_level"], int) or isinstance(payload["risk_level"], bool):
        return "risk_level must be an integer"
    if not isinstance(payload["explanation"], str):
        return "explanation must be a string"
    for key in ("inaccuracies", "hallucinations"):
        if not isinstance(payload[key], list) or not all(isinstance(s, str) for s in payload[key]):
            return f"{key} must be an array of strings"
    return None


def classify_output(answer_text: str, non_entailed_explanations: list[str],
                    backend: LlmBackend) -> ClassificationResult:
    """Categorize unsupported claims and assess output-level risk.

    An empty explanation set short-circuits to risk level 1 with empty
    lists — no backend call is made.
    """
    if not non_entailed_explanations:
        return ClassificationResult(risk_level=1, explanation="No unsupported claims.",
                                    inaccuracies=[], hallucinations=[])
    prompt = prompts.build_classification_prompt(full_ai_output=answer_text,
                                                 explanations=non_entailed_explanations)
    request = LmRequest(role_tag=Role.JUDGE_CLASSIFICATION, system_text="",
                        messages=(("user", prompt),),
                        response_format_hint=ResponseFormat.JSON_OBJECT)
    reply = backend.complete_json(request, check=_classification_check)
    if not 1 <= reply["risk_level"] <= 5:
        raise RiskOutOfRange(f"risk_level {reply['risk_level']} outside 1..5")
    return ClassificationResult(risk_level=reply["risk_level"],
                                explanation=reply["explanation"],
                                inaccuracies=list(reply["inaccuracies"]),
                                hallucinations=list(reply["hallucinations"]))


def _assign_categories(unsupported: list[VerdictRecord], result: ClassificationResult) -> None:
    """Map output-level description lists onto per-segment categories.

    Deterministic three-pass matching: exact equality with the judge
    explanation, then substring containment either way, then leftover
    descriptions paired with leftover verdicts in order.
    """
    pairs = [(ErrorCategory.INACCURACY, text) for text in result.inaccuracies]
    pairs += [(ErrorCategory.HALLUCINATION, text) for text in result.hallucinations]
    taken: set[int] = set()
    assigned: dict[int, ErrorCategory] = {}

    def match(predicate) -> None:
        for pair_index, (category, text) in enumerate(pairs):
            if pair_index in assigned:
                continue
            for verdict_index, verdict in enumerate(unsupported):
                if verdict_index in taken:
                    continue
                if predicate(text, verdict.judge_explanation):
                    assigned[pair_index] = category
                    verdict.category = category
                    taken.add(verdict_index)
                    break

    match(lambda text, expl: text == expl)
    match(lambda text, expl: bool(text) and bool(expl) and (text in expl or expl in text))
    leftovers = [pairs[i][0] for i in range(len(pairs)) if i not in assigned]
    remaining = [v for i, v in enumerate(unsupported) if i not in taken]
    for verdict, category in zip(remaining, leftovers):
        verdict.category = category


def assess_output(answer: Answer, snapshot: Snapshot, backend: LlmBackend) -> OutputAssessment:
    """verify_output plus classification, producing one OutputAssessment."""
    verdicts = verify_output(answer, snapshot, backend)
    unsupported = [v for v in verdicts if not v.unevaluated and not v.entailed]
    result = classify_output(answer.rendered_text,
                             [v.judge_explanation for v in unsupported], backend)
    _assign_categories(unsupported, result)
    return OutputAssessment(answer_id=answer.id, verdicts=verdicts,
                            risk_level=result.risk_level, explanation=result.explanation,
                            inaccuracies=result.inaccuracies,
                            hallucinations=result.hallucinations)


def aggregate(assessments: list[OutputAssessment]) -> MonitorReport:
    """Monitoring totals and per-output rates; order of inputs never matters."""
    if not assessments:
        raise EmptyInput("aggregate needs at least one assessment")
    return MonitorReport(
        outputs_evaluated=len(assessments),
        total_hallucinations=sum(len(a.hallucinations) for a in assessments),
        total_inaccuracies=sum(len(a.inaccuracies) for a in assessments),
        clean_outputs=sum(1 for a in assessments if a.clean),
        unevaluated_segments=sum(a.unevaluated_count for a in assessments),
    )


@dataclass
class ConfusionSummary:
    judge_supported_confirmed: int
    judge_unsupported_confirmed: int
    false_positive_unsupported: int
    false_negative_supported: int

    @property
    def unsupported_precision(self) -> Fraction | None:
        flagged = self.judge_unsupported_confirmed + self.false_positive_unsupported
        return Fraction(self.judge_unsupported_confirmed, flagged) if flagged else None

    @property
    def supported_recall(self) -> Fraction | None:
        labeled = self.judge_supported_confirmed + self.false_negative_supported
        return Fraction(self.judge_supported_confirmed, labeled) if labeled else None

    def to_dict(self) -> dict[str, Any]:
        return {
            "judge_supported_confirmed": self.judge_supported_confirmed,
            "judge_unsupported_confirmed": self.judge_unsupported_confirmed,
            "false_positive_unsupported": self.false_positive_unsupported,
            "false_negative_supported": self.false_negative_supported,
            "unsupported_precision": str(self.unsupported_precision)
            if self.unsupported_precision is not None else None,
            "supported_recall": str(self.supported_recall)
            if self.supported_recall is not None else None,
        }


def compare_to_human(judge_supported: Mapping[int, bool],
                     human_supported: Mapping[int, bool]) -> ConfusionSummary:
    """Confusion counts between judge verdicts and human adjudication.

    ``True`` means supported. Both mappings must cover the same claim
    indices.
    """
    if set(judge_supported) != set(human_supported):
        raise IndexMismatch("judge and human labels cover different claim indices")
    summary = ConfusionSummary(0, 0, 0, 0)
    for index, judge in judge_supported.items():
        human = human_supported[index]
        if judge and human:
            summary.judge_supported_confirmed += 1
        elif judge and not human:
            summary.false_negative_supported += 1
        elif not judge and human:
            summary.false_positive_unsupported += 1
        else:
            summary.judge_unsupported_confirmed += 1
    return summary


def write_report_jsonl(assessments: list[OutputAssessment]) -> str:
    """Verification report: one assessment per line, monitor report last."""
    lines = [json.dumps(a.to_dict(), ensure_ascii=False, sort_keys=True) for a in assessments]
    lines.append(json.dumps(aggregate(assessments).to_dict(), ensure_ascii=False, sort_keys=True))
    return "\n".join(lines) + "\n"
