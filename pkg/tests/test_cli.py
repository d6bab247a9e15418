"""CLI subcommands share the service pipeline and fail with machine-readable lines."""

from __future__ import annotations

import json
from pathlib import Path

import pytest

from chartcite.cli import main
from chartcite.llm import ScriptedBackend
from chartcite.pipeline import run_query
from chartcite.records import FilterCriteria, RecordStore

from conftest import bundle_json, entailed, note_only_fixture

QUERY = "Does the patient report chest pain?"


@pytest.fixture
def bundle_file(tmp_path) -> Path:
    path = tmp_path / "bundle.json"
    path.write_text(bundle_json(), encoding="utf-8")
    return path


@pytest.fixture
def fixture_file(tmp_path) -> Path:
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps(note_only_fixture()), encoding="utf-8")
    return path


def run_cli(*argv: str) -> int:
    return main(list(argv))


def test_ingest_persists_store(tmp_path, bundle_file, capsys):
    data_dir = tmp_path / "data"
    assert run_cli("--data-dir", str(data_dir), "ingest", str(bundle_file)) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["counts"]["Note"] == 5
    assert (data_dir / "store.json").is_file()
    # the persisted store round-trips through a second command
    assert run_cli("--data-dir", str(data_dir), "ingest", str(bundle_file)) != 0  # duplicate ids


def test_ask_prints_answer_json(tmp_path, bundle_file, fixture_file, capsys):
    code = run_cli("--data-dir", str(tmp_path / "data"), "ask", "p1", QUERY,
                   "--bundle", str(bundle_file), "--fixture", str(fixture_file))
    assert code == 0
    answer = json.loads(capsys.readouterr().out)
    assert answer["claims"][0]["citations"][0]["resource_id"] == "n-1"


def test_ask_matches_library_pipeline_byte_for_byte(tmp_path, bundle_file, fixture_file, capsys):
    run_cli("--data-dir", str(tmp_path / "data"), "ask", "p1", QUERY,
            "--bundle", str(bundle_file), "--fixture", str(fixture_file))
    cli_output = capsys.readouterr().out.strip()

    store = RecordStore()
    store.ingest_bundle(bundle_json())
    backend = ScriptedBackend.from_dict(note_only_fixture())
    result = run_query(store.prefetch("p1"), QUERY, FilterCriteria(), backend,
                       known_patient_ids=store.patients())
    assert cli_output == result.answer.to_json()


def test_ask_without_fixture_or_endpoint_is_config_error(tmp_path, bundle_file, capsys, monkeypatch):
    monkeypatch.delenv("CHARTCITE_BACKEND_URL", raising=False)
    code = run_cli("--data-dir", str(tmp_path / "data"), "ask", "p1", QUERY,
                   "--bundle", str(bundle_file))
    assert code != 0
    error = json.loads(capsys.readouterr().err.strip())
    assert error["error"] == "ConfigurationError"


def test_ask_unknown_patient_fails_with_error_line(tmp_path, bundle_file, fixture_file, capsys):
    code = run_cli("--data-dir", str(tmp_path / "data"), "ask", "nobody", QUERY,
                   "--bundle", str(bundle_file), "--fixture", str(fixture_file))
    assert code != 0
    error = json.loads(capsys.readouterr().err.strip())
    assert error["error"] == "UnknownPatient"


def test_regress_exit_zero_on_pristine_gold_dir(tmp_path, capsys):
    gold = tmp_path / "gold"
    case = gold / "case-1"
    case.mkdir(parents=True)
    (case / "bundle.json").write_text(bundle_json(), encoding="utf-8")
    (case / "query.txt").write_text(QUERY, encoding="utf-8")
    (case / "fixture.json").write_text(json.dumps(note_only_fixture([entailed()])),
                                       encoding="utf-8")
    (case / "expected.json").write_text(json.dumps({
        "patient_id": "p1", "citation_closure": True, "verdicts": ["supported"]}),
        encoding="utf-8")
    assert run_cli("regress", str(gold)) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["passed"] == 1 and report["failed"] == 0

    (case / "expected.json").write_text(json.dumps({
        "patient_id": "p1", "citation_closure": True, "verdicts": ["hallucination"]}),
        encoding="utf-8")
    assert run_cli("regress", str(gold)) == 1


def write_verify_case(case_dir: Path, judge_replies: list[dict],
                      classification: dict | None = None) -> None:
    case_dir.mkdir(parents=True)
    (case_dir / "bundle.json").write_text(bundle_json(), encoding="utf-8")
    store = RecordStore()
    store.ingest_bundle(bundle_json())
    backend = ScriptedBackend.from_dict(note_only_fixture())
    result = run_query(store.prefetch("p1"), QUERY, FilterCriteria(), backend,
                       known_patient_ids=store.patients())
    (case_dir / "answer.json").write_text(result.answer.to_json(), encoding="utf-8")
    queues: dict = {"JudgeEntailment": [json.dumps(r) for r in judge_replies]}
    if classification is not None:
        queues["JudgeClassification"] = [json.dumps(classification)]
    (case_dir / "fixture.json").write_text(json.dumps({"queues": queues}), encoding="utf-8")


def test_verify_writes_jsonl_with_trailing_monitor_report(tmp_path, capsys):
    answers = tmp_path / "answers"
    write_verify_case(answers / "case-a", [entailed()])
    write_verify_case(answers / "case-b", [entailed()])
    out = tmp_path / "report.jsonl"
    assert run_cli("verify", str(answers), "--out", str(out)) == 0
    lines = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(lines) == 3
    assert lines[-1]["type"] == "monitor_report"
    assert lines[-1]["outputs_evaluated"] == 2
    assert lines[-1]["clean_outputs"] == 2
    capsys.readouterr()


def test_report_summarizes_jsonl(tmp_path, capsys):
    answers = tmp_path / "answers"
    write_verify_case(answers / "case-a", [entailed()])
    out = tmp_path / "report.jsonl"
    run_cli("verify", str(answers), "--out", str(out))
    capsys.readouterr()
    assert run_cli("report", str(out)) == 0
    text = capsys.readouterr().out
    assert "outputs evaluated: 1" in text
    assert "hallucinations: 0 (0.00 per output)" in text
    assert "clean outputs: 1 (100%)" in text


def test_categorize_csv_with_fixture(tmp_path, capsys):
    questions = tmp_path / "questions.csv"
    questions.write_text("question\nIs a flu shot due?\nRetry\n", encoding="utf-8")
    fixture = tmp_path / "cat-fixture.json"
    fixture.write_text(json.dumps({"queues": {"Categorizer": [json.dumps({
        "Question": "Is a flu shot due?",
        "Best Category": "Preventive Care",
        "Interpretation": "vaccination status lookup",
        "Second Category": None,
    })]}}), encoding="utf-8")
    assert run_cli("categorize", str(questions), "--fixture", str(fixture)) == 0
    document = json.loads(capsys.readouterr().out)
    assert document["caption"].startswith("USER ERROR: 1")
    (result,) = document["results"]
    assert set(result) == {"Question", "Best Category", "Interpretation", "Second Category"}
    assert result["Best Category"] == "Preventive Care"
    assert document["counts"]["Preventive Care"] == 1


def test_report_rejects_non_report_file(tmp_path, capsys):
    bogus = tmp_path / "bogus.jsonl"
    bogus.write_text('{"not": "a report"}\n', encoding="utf-8")
    assert run_cli("report", str(bogus)) != 0
    error = json.loads(capsys.readouterr().err.strip())
    assert "error" in error
