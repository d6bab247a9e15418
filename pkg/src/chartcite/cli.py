"""Batch command line: ingest, ask, verify, regress, categorize, report, serve.

Every subcommand exits 0 on success and nonzero after printing one
machine-readable JSON error line to stderr. --fixture selects the scripted
backend; without it a configured endpoint is required — there is no silent
mock.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import Callable

from .config import Config
from .errors import ChartCiteError, ConfigurationError, UserErrorQuestion
from .goldset import run_regression
from .llm import ChatCompletionsClient, LlmBackend, ScriptedBackend
from .pipeline import run_query
from .records import FilterCriteria, RecordStore
from .synthesis import answer_from_dict, canonical_json, validate_citations
from .taxonomy import aggregate_categories, categorize_question, starter_clean
from .verifier import MonitorReport, aggregate, assess_output, truncate_percent, truncate_rate


def _fail(exc: Exception, code: int = 1) -> int:
    print(json.dumps({"error": type(exc).__name__, "detail": str(exc)}), file=sys.stderr)
    return code


def _load_store(config: Config, bundle: str | None = None) -> RecordStore:
    store = RecordStore()
    if config.store_path.is_file():
        store.ingest_bundle(config.store_path.read_text(encoding="utf-8"))
    if bundle:
        store.ingest_bundle(Path(bundle).read_text(encoding="utf-8"))
    return store


def _save_store(config: Config, store: RecordStore) -> None:
    config.store_path.parent.mkdir(parents=True, exist_ok=True)
    config.store_path.write_text(store.export_bundle(), encoding="utf-8")


def _backend_factory(fixture: str | None, config: Config) -> Callable[[], LlmBackend]:
    """Fresh scripted backend per use, or one shared wire client."""
    if fixture:
        fixture_path = Path(fixture)
        if not fixture_path.is_file():
            raise ConfigurationError(f"fixture file not found: {fixture}")
        return lambda: ScriptedBackend.from_file(fixture_path)
    if config.backend_url:
        client = ChatCompletionsClient(config.backend_url, model=config.model,
                                       token=config.backend_token)
        return lambda: client
    raise ConfigurationError("no --fixture given and no backend endpoint configured")


def _cmd_ingest(args: argparse.Namespace, config: Config) -> int:
    store = _load_store(config)
    summary = store.ingest_bundle(Path(args.bundle).read_text(encoding="utf-8"))
    _save_store(config, store)
    print(json.dumps({
        "counts": {kind.value: n for kind, n in sorted(summary.counts.items(),
                                                       key=lambda kv: kv[0].value)},
        "skipped": summary.skipped,
        "warnings": summary.warnings,
    }, ensure_ascii=False))
    return 0


def _cmd_ask(args: argparse.Namespace, config: Config) -> int:
    store = _load_store(config, bundle=args.bundle)
    backend = _backend_factory(args.fixture, config)()
    snapshot = store.prefetch(args.patient)
    criteria = FilterCriteria.from_dict(json.loads(args.criteria)) if args.criteria \
        else FilterCriteria()
    strict = config.strict if args.strict is None else args.strict
    result = run_query(snapshot, args.query, criteria, backend,
                       format_tag=args.format_tag, strict=strict,
                       known_patient_ids=store.patients())
    print(result.answer.to_json())
    return 0


def _cmd_verify(args: argparse.Namespace, config: Config) -> int:
    answers_dir = Path(args.answers_dir)
    case_dirs = sorted(p for p in answers_dir.iterdir() if p.is_dir()
                       and (p / "answer.json").is_file())
    if not case_dirs:
        raise ChartCiteError(f"no answer cases under {answers_dir}")
    assessments = []
    for case_dir in case_dirs:
        store = RecordStore()
        store.ingest_bundle((case_dir / "bundle.json").read_text(encoding="utf-8"))
        answer = answer_from_dict(json.loads((case_dir / "answer.json").read_text(encoding="utf-8")))
        if not answer.guardrail_status.passed:
            print(json.dumps({"warning": "skipping blocked answer", "case": case_dir.name}),
                  file=sys.stderr)
            continue
        snapshot = store.prefetch(answer.patient_id)
        closure = validate_citations(answer, snapshot)
        if not closure.closed:
            raise ChartCiteError(f"{case_dir.name}: answer fails citation closure "
                                 f"{closure.to_dict()}")
        fixture = case_dir / "fixture.json" if (case_dir / "fixture.json").is_file() else args.fixture
        if not fixture:
            raise ConfigurationError(f"{case_dir.name}: no fixture.json and no --fixture")
        backend = ScriptedBackend.from_file(fixture)
        assessments.append(assess_output(answer, snapshot, backend))
    lines = [canonical_json(a.to_dict()) for a in assessments]
    lines.append(canonical_json(aggregate(assessments).to_dict()))
    output = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(output, encoding="utf-8")
    print(output, end="")
    return 0


def _cmd_regress(args: argparse.Namespace, config: Config) -> int:
    report = run_regression(args.gold_dir)
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(report.to_json())
    return 0 if report.all_passed else 1


def _read_questions(path: Path) -> list[str]:
    with path.open(encoding="utf-8", newline="") as handle:
        rows = list(csv.reader(handle))
    if not rows:
        return []
    header = [cell.strip().lower() for cell in rows[0]]
    column = header.index("question") if "question" in header else 0
    body = rows[1:] if "question" in header else rows
    return [row[column] for row in body if row and row[column].strip()]


def _cmd_categorize(args: argparse.Namespace, config: Config) -> int:
    questions = _read_questions(Path(args.questions))
    kept, user_errors = starter_clean(questions)
    backend_factory = _backend_factory(args.fixture, config)
    results = []
    assignments = []
    failed = 0
    for question in kept:
        try:
            assignment = categorize_question(question, backend_factory())
        except UserErrorQuestion:
            user_errors += 1
            continue
        except ChartCiteError as exc:
            failed += 1
            results.append({"Question": question, "error": f"{type(exc).__name__}: {exc}"})
            continue
        assignments.append(assignment)
        results.append(assignment.to_dict())
    document = {
        "caption": f"USER ERROR: {user_errors} question(s) removed by the starter clean",
        "results": results,
        "counts": aggregate_categories(assignments),
        "failed": failed,
    }
    output = json.dumps(document, ensure_ascii=False, indent=2)
    if args.out:
        Path(args.out).write_text(output + "\n", encoding="utf-8")
    print(output)
    return 0


def _cmd_report(args: argparse.Namespace, config: Config) -> int:
    lines = [line for line in Path(args.jsonl).read_text(encoding="utf-8").splitlines() if line]
    if not lines:
        raise ChartCiteError("report file is empty")
    trailer = json.loads(lines[-1])
    if trailer.get("type") != "monitor_report":
        raise ChartCiteError("last line is not a monitor report")
    report = MonitorReport(
        outputs_evaluated=trailer["outputs_evaluated"],
        total_hallucinations=trailer["total_hallucinations"],
        total_inaccuracies=trailer["total_inaccuracies"],
        clean_outputs=trailer["clean_outputs"],
        unevaluated_segments=trailer.get("unevaluated_segments", 0),
    )
    print(f"outputs evaluated: {report.outputs_evaluated}")
    print(f"hallucinations: {report.total_hallucinations} "
          f"({truncate_rate(report.hallucinations_per_output)} per output)")
    print(f"inaccuracies: {report.total_inaccuracies} "
          f"({truncate_rate(report.inaccuracies_per_output)} per output)")
    print(f"clean outputs: {report.clean_outputs} "
          f"({truncate_percent(report.clean_output_fraction)})")
    if report.unevaluated_segments:
        print(f"unevaluated segments (excluded from rates): {report.unevaluated_segments}")
    return 0


def _cmd_serve(args: argparse.Namespace, config: Config) -> int:
    import uvicorn

    from .service import Engine, create_app

    store = _load_store(config, bundle=args.bundle)
    engine = Engine(store=store, backend_factory=_backend_factory(args.fixture, config),
                    strict=config.strict)
    app = create_app(engine, api_token=config.api_token)
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chartcite",
                                     description="Citation-grounded record search and synthesis")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--data-dir", help="override the configured data directory")
    commands = parser.add_subparsers(dest="command", required=True)

    ingest = commands.add_parser("ingest", help="ingest a bundle into the data directory")
    ingest.add_argument("bundle")
    ingest.set_defaults(handler=_cmd_ingest)

    ask = commands.add_parser("ask", help="run one query end to end and print the answer JSON")
    ask.add_argument("patient")
    ask.add_argument("query")
    ask.add_argument("--fixture", help="scripted backend fixture file")
    ask.add_argument("--bundle", help="also ingest this bundle before asking")
    ask.add_argument("--criteria", help="filter criteria as JSON")
    ask.add_argument("--format-tag", default="summary")
    strictness = ask.add_mutually_exclusive_group()
    strictness.add_argument("--strict", dest="strict", action="store_true", default=None)
    strictness.add_argument("--no-strict", dest="strict", action="store_false")
    ask.set_defaults(handler=_cmd_ask)

    verify = commands.add_parser("verify", help="verify stored answers and write a report")
    verify.add_argument("answers_dir")
    verify.add_argument("--fixture", help="fallback fixture for cases without fixture.json")
    verify.add_argument("--out", help="also write the JSONL report here")
    verify.set_defaults(handler=_cmd_verify)

    regress = commands.add_parser("regress", help="re-run the gold-standard cases")
    regress.add_argument("gold_dir")
    regress.add_argument("--out", help="also write the report JSON here")
    regress.set_defaults(handler=_cmd_regress)

    categorize = commands.add_parser("categorize", help="categorize questions from a CSV")
    categorize.add_argument("questions")
    categorize.add_argument("--fixture", help="scripted backend fixture file")
    categorize.add_argument("--out", help="also write the output JSON here")
    categorize.set_defaults(handler=_cmd_categorize)

    report = commands.add_parser("report", help="summarize a verification report JSONL")
    report.add_argument("jsonl")
    report.set_defaults(handler=_cmd_report)

    serve = commands.add_parser("serve", help="run the HTTP service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--fixture", help="scripted backend fixture file")
    serve.add_argument("--bundle", help="ingest this bundle at startup")
    serve.set_defaults(handler=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = Config.load(args.config)
        if args.data_dir:
            config.data_dir = args.data_dir
        return args.handler(args, config)
    except ChartCiteError as exc:
        return _fail(exc)
    except (OSError, json.JSONDecodeError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
