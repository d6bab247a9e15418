"""Scripted backend semantics, schema retry, and call logging."""

from __future__ import annotations

import json

import pytest

from chartcite.errors import FixtureParse, SchemaViolation, ScriptExhausted
from chartcite.llm import (
    LmRequest,
    ResponseFormat,
    Role,
    ScriptedBackend,
    request_digest,
)


def make_request(text: str = "hello", role: Role = Role.COMPOSER,
                 hint: ResponseFormat = ResponseFormat.FREE_TEXT) -> LmRequest:
    return LmRequest(role_tag=role, system_text="", messages=(("user", text),),
                     response_format_hint=hint)


def test_queue_reply():
    backend = ScriptedBackend(queues={"Composer": ["OK"]})
    assert backend.complete(make_request()).text == "OK"


def test_exact_match_wins_over_queue():
    request = make_request("specific")
    digest = request_digest(request)
    backend = ScriptedBackend(exact={("Composer", digest): "exact"},
                              queues={"Composer": ["queued"]})
    assert backend.complete(request).text == "exact"
    # exact entries are reusable
    assert backend.complete(request).text == "exact"


def test_identical_requests_against_fresh_fixture_identical_replies():
    fixture = {"queues": {"Composer": ["same"]}}
    first = ScriptedBackend.from_dict(fixture).complete(make_request())
    second = ScriptedBackend.from_dict(fixture).complete(make_request())
    assert first.text == second.text


def test_empty_fixture_raises_script_exhausted():
    backend = ScriptedBackend()
    with pytest.raises(ScriptExhausted):
        backend.complete(make_request())


def test_fifo_exhausts_on_third_request():
    backend = ScriptedBackend(queues={"Composer": ["a", "b"]})
    assert backend.complete(make_request()).text == "a"
    assert backend.complete(make_request()).text == "b"
    with pytest.raises(ScriptExhausted):
        backend.complete(make_request())


def test_json_hint_not_json_twice_raises_schema_violation():
    backend = ScriptedBackend(queues={"Composer": ["not json", "still not json"]})
    with pytest.raises(SchemaViolation):
        backend.complete(make_request(hint=ResponseFormat.JSON_OBJECT))
    assert backend.calls_for(Role.COMPOSER) == 1  # one complete() call, one log record


def test_json_hint_retry_succeeds_on_second_reply():
    backend = ScriptedBackend(queues={"Composer": ["not json", json.dumps({"k": 1})]})
    response = backend.complete(make_request(hint=ResponseFormat.JSON_OBJECT))
    assert json.loads(response.text) == {"k": 1}


def test_json_hint_rejects_non_object_json():
    backend = ScriptedBackend(queues={"Composer": ["[1, 2]", "[3]"]})
    with pytest.raises(SchemaViolation):
        backend.complete(make_request(hint=ResponseFormat.JSON_OBJECT))


def test_custom_check_gets_one_retry():
    good = json.dumps({"k": 1})
    backend = ScriptedBackend(queues={"Composer": [json.dumps({"k": 1, "extra": 2}), good]})
    check = lambda obj: None if set(obj) == {"k"} else "extra keys"
    reply = backend.complete(make_request(hint=ResponseFormat.JSON_OBJECT), check=check)
    assert json.loads(reply.text) == {"k": 1}


def test_log_record_per_complete_call(tmp_path):
    log_path = tmp_path / "calls.jsonl"
    backend = ScriptedBackend(queues={"Composer": ["a", "b", "c"]}, log_path=log_path)
    for _ in range(3):
        backend.complete(make_request())
    assert len(backend.call_log) == 3
    lines = log_path.read_text().splitlines()
    assert len(lines) == 3
    record = json.loads(lines[0])
    assert set(record) == {"timestamp", "role_tag", "request_digest", "response_digest", "latency"}
    assert record["role_tag"] == "Composer"


def test_failed_call_still_logged_once():
    backend = ScriptedBackend()
    with pytest.raises(ScriptExhausted):
        backend.complete(make_request())
    assert len(backend.call_log) == 1


def test_digest_depends_on_messages_and_system():
    base = make_request("one")
    assert request_digest(base) == request_digest(make_request("one"))
    assert request_digest(base) != request_digest(make_request("two"))
    with_system = LmRequest(role_tag=Role.COMPOSER, system_text="sys",
                            messages=(("user", "one"),))
    assert request_digest(base) != request_digest(with_system)


def test_empty_message_list_rejected():
    with pytest.raises(ValueError):
        LmRequest(role_tag=Role.COMPOSER, system_text="", messages=())


def test_fixture_parse_errors():
    with pytest.raises(FixtureParse):
        ScriptedBackend.from_dict({"exact": [{"role": "Composer"}]})
    with pytest.raises(FixtureParse):
        ScriptedBackend.from_dict({"queues": {"NotARole": ["x"]}})
    with pytest.raises(FixtureParse):
        ScriptedBackend.from_dict({"queues": {"Composer": "not a list"}})


def test_fixture_file_round_trip(tmp_path):
    path = tmp_path / "fixture.json"
    path.write_text(json.dumps({"queues": {"Composer": ["from file"]}}))
    backend = ScriptedBackend.from_file(path)
    assert backend.complete(make_request()).text == "from file"
    with pytest.raises(FixtureParse):
        ScriptedBackend.from_file(tmp_path / "missing.json")
