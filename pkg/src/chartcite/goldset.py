"""Gold-standard regression loop.

A gold case is a directory holding bundle.json, query.txt, fixture.json and
expected.json. Each run re-executes the case end-to-end against its
scripted backend; a case passes when citation closure matches the expected
flag and the verdict vector matches the adjudicated expectation. Answer
wording is deliberately not compared — provenance and adjudication are the
contract. Reports carry no timestamps, so identical inputs produce
byte-identical reports.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import MissingFixture
from .llm import ScriptedBackend
from .pipeline import run_query
from .records import FilterCriteria, RecordStore
from .synthesis import canonical_json, validate_citations
from .verifier import OutputAssessment, assess_output

_REQUIRED_FILES = ("bundle.json", "query.txt", "fixture.json", "expected.json")


@dataclass
class GoldCase:
    id: str
    bundle_text: str
    query: str
    fixture: dict[str, Any]
    expected: dict[str, Any]

    @property
    def patient_id(self) -> str:
        return self.expected["patient_id"]


@dataclass
class GoldRun:
    """One end-to-end execution of a gold case."""

    answer_json: str
    assessment: OutputAssessment
    closure: bool
    verdict_vector: list[str]

    def report_line(self) -> str:
        return canonical_json(self.assessment.to_dict())


@dataclass
class CaseResult:
    case_id: str
    passed: bool
    closure_ok: bool
    expected_closure: bool
    verdict_diffs: list[dict[str, Any]] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "case_id": self.case_id,
            "passed": self.passed,
            "closure_ok": self.closure_ok,
            "expected_closure": self.expected_closure,
            "verdict_diffs": self.verdict_diffs,
            "error": self.error,
        }


@dataclass
class RegressionReport:
    cases: list[CaseResult]

    @property
    def passed_count(self) -> int:
        return sum(1 for c in self.cases if c.passed)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.cases)

    def to_dict(self) -> dict[str, Any]:
        return {
            "cases": [c.to_dict() for c in self.cases],
            "total": len(self.cases),
            "passed": self.passed_count,
            "failed": len(self.cases) - self.passed_count,
        }

    def to_json(self) -> str:
        return canonical_json(self.to_dict())


def load_gold_case(case_dir: str | Path) -> GoldCase:
    case_dir = Path(case_dir)
    for name in _REQUIRED_FILES:
        if not (case_dir / name).is_file():
            raise MissingFixture(f"{case_dir.name}: missing {name}")
    expected = json.loads((case_dir / "expected.json").read_text(encoding="utf-8"))
    if "patient_id" not in expected:
        raise MissingFixture(f"{case_dir.name}: expected.json needs patient_id")
    return GoldCase(
        id=case_dir.name,
        bundle_text=(case_dir / "bundle.json").read_text(encoding="utf-8"),
        query=(case_dir / "query.txt").read_text(encoding="utf-8").strip(),
        fixture=json.loads((case_dir / "fixture.json").read_text(encoding="utf-8")),
        expected=expected,
    )


def run_gold_case(case: GoldCase) -> GoldRun:
    """Execute one case with a fresh store and a fresh scripted backend."""
    store = RecordStore()
    store.ingest_bundle(case.bundle_text)
    backend = ScriptedBackend.from_dict(case.fixture)
    snapshot = store.prefetch(case.patient_id)
    criteria = FilterCriteria.from_dict(case.expected.get("criteria") or {})
    result = run_query(
        snapshot,
        case.query,
        criteria,
        backend,
        format_tag=case.expected.get("format_tag", "summary"),
        strict=bool(case.expected.get("strict", True)),
        known_patient_ids=store.patients(),
    )
    report = validate_citations(result.answer, snapshot)
    assessment = assess_output(result.answer, snapshot, backend)
    return GoldRun(
        answer_json=result.answer.to_json(),
        assessment=assessment,
        closure=report.closed,
        verdict_vector=assessment.verdict_vector(),
    )


def _evaluate(case: GoldCase, run: GoldRun) -> CaseResult:
    expected_closure = bool(case.expected.get("citation_closure", True))
    expected_verdicts = list(case.expected.get("verdicts", []))
    diffs = []
    width = max(len(expected_verdicts), len(run.verdict_vector))
    for index in range(width):
        want = expected_verdicts[index] if index < len(expected_verdicts) else None
        got = run.verdict_vector[index] if index < len(run.verdict_vector) else None
        if want != got:
            diffs.append({"segment": index, "expected": want, "actual": got})
    closure_ok = run.closure == expected_closure
    return CaseResult(case_id=case.id, passed=closure_ok and not diffs,
                      closure_ok=run.closure, expected_closure=expected_closure,
                      verdict_diffs=diffs)


def run_regression(gold_dir: str | Path) -> RegressionReport:
    """Re-run every case under gold_dir; deterministic report, sorted by case id."""
    gold_dir = Path(gold_dir)
    results: list[CaseResult] = []
    for case_dir in sorted(p for p in gold_dir.iterdir() if p.is_dir()):
        case = load_gold_case(case_dir)
        try:
            run = run_gold_case(case)
        except MissingFixture:
            raise
        except Exception as exc:  # a crashed case is a failed case, not a crashed report
            results.append(CaseResult(case_id=case.id, passed=False, closure_ok=False,
                                      expected_closure=bool(case.expected.get("citation_closure", True)),
                                      error=f"{type(exc).__name__}: {exc}"))
            continue
        results.append(_evaluate(case, run))
    return RegressionReport(cases=results)
