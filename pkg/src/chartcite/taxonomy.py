"""Question taxonomy: fixed category list, hard rules, LLM categorizer.

Twenty categories — eleven primary plus nine subgroups — with three hard
rules: at most three categories per question, every subgroup accompanied by
its parent, and five mutually exclusive pairs. The validator is a pure
gate; the categorizer repairs a missing parent when a slot is free and
rejects anything else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Iterable, Sequence

from . import prompts
from .errors import UnknownCategoryName, UserErrorQuestion, ValidationFailed
from .llm import LlmBackend, LmRequest, ResponseFormat, Role

PRIMARY_CATEGORIES: tuple[str, ...] = (
    "Clinical Summary and Multi-Chart Review",
    "Admissions and Inter-system movement",
    "Consults, Internal Handoffs, and Intra-encounter coordination",
    "Discharge and Transitions of Care",
    "Preventive Care",
    "Quality and Safety",
    "Clinical Reasoning and Decision Support",
    "Clinical Trials and Study-Fit",
    "Registries and Forms",
    "Point-of-Care Information Retrieval",
    "Temporal Pattern Analysis",
)

SUBGROUP_PARENT: dict[str, str] = {
    "[Subgroup] Psychiatric Behavioral Health Summary": "Clinical Summary and Multi-Chart Review",
    "[Subgroup] Social and Caregiver Context Summary": "Clinical Summary and Multi-Chart Review",
    "[Subgroup] Point-of-Care Imaging Support and Radiology": "Point-of-Care Information Retrieval",
    "[Subgroup] Point-of-Care Laboratory and Vitals Analysis": "Point-of-Care Information Retrieval",
    "[Subgroup] Point-of-Care Medication Management": "Point-of-Care Information Retrieval",
    "[Subgroup] Point-of-Care Problem Lists and Diagnosis": "Point-of-Care Information Retrieval",
    "[Subgroup] Temporal Patterns with Imaging and Radiology": "Temporal Pattern Analysis",
    "[Subgroup] Temporal Patterns with Laboratory and Vitals Analysis": "Temporal Pattern Analysis",
    "[Subgroup] Temporal Patterns with Medications": "Temporal Pattern Analysis",
}

ALL_CATEGORIES: tuple[str, ...] = PRIMARY_CATEGORIES + tuple(SUBGROUP_PARENT)

EXCLUSION_PAIRS: tuple[frozenset[str], ...] = (
    frozenset({"Point-of-Care Information Retrieval", "Clinical Summary and Multi-Chart Review"}),
    frozenset({"Point-of-Care Information Retrieval", "Temporal Pattern Analysis"}),
    frozenset({"Discharge and Transitions of Care", "Admissions and Inter-system movement"}),
    frozenset({"Discharge and Transitions of Care",
               "Consults, Internal Handoffs, and Intra-encounter coordination"}),
    frozenset({"Admissions and Inter-system movement",
               "Consults, Internal Handoffs, and Intra-encounter coordination"}),
)

MAX_CATEGORIES = 3

#: Bare retry commands removed by the starter clean and counted as USER ERROR.
STARTER_NOISE = ("retry", "rerun", "do again")


@dataclass(frozen=True)
class CategoryAssignment:
    question: str
    best: str
    second: str | None
    third: str | None
    interpretation: str

    def categories(self) -> tuple[str, ...]:
        return tuple(c for c in (self.best, self.second, self.third) if c)

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "Question": self.question,
            "Best Category": self.best,
            "Interpretation": self.interpretation,
            "Second Category": self.second,
        }
        if self.third is not None:
            data["Third Category"] = self.third
        return data


@dataclass(frozen=True)
class RuleViolation:
    rule: str  # "max-categories" | "subgroup-parent" | "mutual-exclusion" | "empty-best" | "unknown-category"
    detail: str


def validate_categories(categories: Sequence[str]) -> list[RuleViolation]:
    """Check an ordered category list against the three hard rules.

    Pure function; violations are data, never exceptions. The first slot is
    the best category and must be present.
    """
    violations: list[RuleViolation] = []
    if not categories or not categories[0]:
        violations.append(RuleViolation("empty-best", "best category is empty"))
    present = [c for c in categories if c]
    for name in present:
        if name not in ALL_CATEGORIES:
            violations.append(RuleViolation("unknown-category", name))
    if len(present) > MAX_CATEGORIES:
        violations.append(RuleViolation(
            "max-categories", f"{len(present)} categories assigned (maximum {MAX_CATEGORIES})"))
    present_set = set(present)
    for name in present:
        parent = SUBGROUP_PARENT.get(name)
        if parent and parent not in present_set:
            violations.append(RuleViolation("subgroup-parent", f"{name} requires {parent}"))
    for pair in EXCLUSION_PAIRS:
        if pair <= present_set:
            first, second = sorted(pair)
            violations.append(RuleViolation("mutual-exclusion", f"{first} vs. {second}"))
    return violations


def validate_assignment(assignment: CategoryAssignment) -> list[RuleViolation]:
    return validate_categories(assignment.categories())


def is_starter_noise(question: str) -> bool:
    return question.strip().lower().rstrip(".!") in STARTER_NOISE


def starter_clean(questions: Iterable[str]) -> tuple[list[str], int]:
    """Remove bare retry commands; returns (kept questions, USER ERROR count)."""
    kept: list[str] = []
    user_errors = 0
    for question in questions:
        if is_starter_noise(question):
            user_errors += 1
        elif question.strip():
            kept.append(question)
    return kept, user_errors


_SLOT_KEYS = ("Best Category", "Second Category", "Third Category",
              "Fourth Category", "Fifth Category")


def _categorizer_check(payload: Any) -> str | None:
    required = {"Question", "Best Category", "Interpretation", "Second Category"}
    missing = required - set(payload)
    if missing:
        return f"missing keys: {sorted(missing)}"
    allowed = required | {"Third Category", "Fourth Category", "Fifth Category"}
    extras = set(payload) - allowed
    if extras:
        return f"unexpected keys: {sorted(extras)}"
    if not isinstance(payload["Best Category"], str) or not payload["Best Category"]:
        return "Best Category must be a non-empty string"
    return None


def categorize_question(question: str, backend: LlmBackend) -> CategoryAssignment:
    """Categorize one question via the LLM, then repair or reject.

    Bare retry commands violate the starter-clean precondition. A subgroup
    missing its parent is repaired by inserting the parent into the first
    free slot; over-assignment and exclusion conflicts are unrepairable.
    """
    if is_starter_noise(question) or not question.strip():
        raise UserErrorQuestion(question.strip() or "(empty question)")
    prompt = prompts.build_categorizer_prompt(question=question)
    request = LmRequest(role_tag=Role.CATEGORIZER, system_text="",
                        messages=(("user", prompt),),
                        response_format_hint=ResponseFormat.JSON_OBJECT)
    reply = backend.complete_json(request, check=_categorizer_check)

    slots: list[str] = []
    for key in _SLOT_KEYS:
        value = reply.get(key)
        if value is None:
            continue
        if not isinstance(value, str) or not value:
            raise ValidationFailed(f"{key} must be a category name or null")
        if value not in ALL_CATEGORIES:
            raise UnknownCategoryName(value)
        slots.append(value)

    # Repair pass: append missing parents while slots remain free.
    for name in list(slots):
        parent = SUBGROUP_PARENT.get(name)
        if parent and parent not in slots:
            if len(slots) >= MAX_CATEGORIES:
                raise ValidationFailed(f"{name} lacks parent {parent} and no slot is free")
            slots.append(parent)

    violations = validate_categories(slots)
    if violations:
        detail = "; ".join(f"{v.rule}: {v.detail}" for v in violations)
        raise ValidationFailed(detail)
    interpretation = reply.get("Interpretation")
    return CategoryAssignment(
        question=str(reply.get("Question", question)),
        best=slots[0],
        second=slots[1] if len(slots) > 1 else None,
        third=slots[2] if len(slots) > 2 else None,
        interpretation=interpretation if isinstance(interpretation, str) else "",
    )


def aggregate_categories(assignments: Iterable[CategoryAssignment]) -> dict[str, int]:
    """Counts over all slots; a question increments every category it holds."""
    counts = {name: 0 for name in ALL_CATEGORIES}
    for assignment in assignments:
        for name in assignment.categories():
            counts[name] += 1
    return counts


def categories_per_question(assignments: Sequence[CategoryAssignment]) -> float | None:
    """Diagnostic only — the 1.5–2.0 target is a corpus goal, never enforced."""
    if not assignments:
        return None
    return sum(len(a.categories()) for a in assignments) / len(assignments)
