"""Record store: ingest, filtering, canonical text, snapshots, spans."""

from __future__ import annotations

import json
import random
from datetime import datetime, timezone

import pytest

from chartcite.errors import DuplicateId, MalformedDocument, SpanOutOfBounds, UnknownPatient
from chartcite.records import (
    FilterCriteria,
    RecordStore,
    ResourceKind,
    Span,
    byte_len,
    parse_instant,
    render_canonical_text,
    slice_bytes,
    validate_span,
)

from conftest import SAMPLE_BUNDLE


def test_ingest_empty_bundle():
    store = RecordStore()
    summary = store.ingest_bundle(json.dumps({"entry": []}))
    assert summary.counts == {}
    assert summary.skipped == 0


def test_ingest_counts_by_kind():
    store = RecordStore()
    bundle = {"entry": [
        {"resource": {"resourceType": "Note", "id": "n-1", "patientId": "p", "timestamp": "2025-01-01T00:00:00Z", "text": "a"}},
        {"resource": {"resourceType": "Note", "id": "n-2", "patientId": "p", "timestamp": "2025-01-02T00:00:00Z", "text": "b"}},
        {"resource": {"resourceType": "LabResult", "id": "l-1", "patientId": "p", "timestamp": "2025-01-03T00:00:00Z", "name": "K", "value": 4}},
    ]}
    summary = store.ingest_bundle(json.dumps(bundle))
    assert summary.counts == {ResourceKind.NOTE: 2, ResourceKind.LAB_RESULT: 1}


def test_ingest_not_json():
    with pytest.raises(MalformedDocument):
        RecordStore().ingest_bundle("not json {")


def test_ingest_missing_entry_array():
    with pytest.raises(MalformedDocument):
        RecordStore().ingest_bundle(json.dumps({"resourceType": "Bundle"}))


def test_duplicate_id_aborts_whole_ingest():
    store = RecordStore()
    bundle = {"entry": [
        {"resource": {"resourceType": "Note", "id": "n-1", "patientId": "p", "timestamp": "2025-01-01T00:00:00Z", "text": "a"}},
        {"resource": {"resourceType": "Note", "id": "n-1", "patientId": "p", "timestamp": "2025-01-02T00:00:00Z", "text": "b"}},
    ]}
    with pytest.raises(DuplicateId):
        store.ingest_bundle(json.dumps(bundle))
    assert store.patients() == frozenset()


def test_duplicate_id_across_ingests_leaves_store_unchanged(store):
    before = store.export_bundle()
    with pytest.raises(DuplicateId):
        store.ingest_bundle(json.dumps({"entry": [
            {"resource": {"resourceType": "Note", "id": "n-1", "patientId": "p1",
                          "timestamp": "2025-05-01T00:00:00Z", "text": "dup"}},
        ]}))
    assert store.export_bundle() == before


def test_unrecognized_kind_skipped_with_warning():
    store = RecordStore()
    bundle = {"entry": [
        {"resource": {"resourceType": "CarePlan", "id": "c-1", "patientId": "p", "timestamp": "2025-01-01T00:00:00Z"}},
        {"resource": {"resourceType": "Note", "id": "n-1", "patientId": "p", "timestamp": "2025-01-01T00:00:00Z", "text": "a"}},
    ]}
    summary = store.ingest_bundle(json.dumps(bundle))
    assert summary.skipped == 1
    assert any("CarePlan" in w for w in summary.warnings)
    assert summary.counts == {ResourceKind.NOTE: 1}


def test_missing_timestamp_skipped_except_demographics():
    store = RecordStore()
    bundle = {"entry": [
        {"resource": {"resourceType": "LabResult", "id": "l-1", "patientId": "p", "name": "K", "value": 4}},
        {"resource": {"resourceType": "Demographics", "id": "d-1", "patientId": "p", "sex": "M"}},
    ]}
    summary = store.ingest_bundle(json.dumps(bundle))
    assert summary.skipped == 1
    assert summary.counts == {ResourceKind.DEMOGRAPHICS: 1}


def test_filter_empty_criteria_returns_all_newest_first(store):
    resources = store.filter_resources("p1", FilterCriteria())
    assert len(resources) == len(SAMPLE_BUNDLE["entry"])
    stamps = [r.timestamp for r in resources if r.timestamp is not None]
    assert stamps == sorted(stamps, reverse=True)
    assert resources[-1].kind is ResourceKind.DEMOGRAPHICS  # timestamp-less sorts last


def test_filter_time_range_before_everything_is_empty(store):
    lo = parse_instant("1990-01-01T00:00:00Z")
    hi = parse_instant("1990-12-31T00:00:00Z")
    assert store.filter_resources("p1", FilterCriteria(time_range=(lo, hi))) == []


def test_filter_note_type_selects_exactly_matching_notes(store):
    criteria = FilterCriteria(kinds=frozenset({ResourceKind.NOTE}),
                              note_types=frozenset({"Discharge Summary"}))
    result = store.filter_resources("p1", criteria)
    assert [r.id for r in result] == ["n-2", "n-3"]


def test_filter_unknown_patient(store):
    with pytest.raises(UnknownPatient):
        store.filter_resources("nobody", FilterCriteria())


def test_filter_ordering_breaks_timestamp_ties_by_id(store):
    # l-2 and l-3 share a timestamp
    result = store.filter_resources("p1", FilterCriteria(kinds=frozenset({ResourceKind.LAB_RESULT})))
    assert [r.id for r in result] == ["l-1", "l-2", "l-3"]


def test_time_range_validation():
    lo = parse_instant("2025-01-02T00:00:00Z")
    hi = parse_instant("2025-01-01T00:00:00Z")
    with pytest.raises(ValueError):
        FilterCriteria(time_range=(lo, hi))


def test_canonical_text_note_verbatim():
    text = render_canonical_text(ResourceKind.NOTE, {"text": "Patient denies chest pain.",
                                                     "timestamp": "2025-01-01T00:00:00Z"})
    assert text == "Patient denies chest pain."


def test_canonical_text_lab_four_lines_fixed_order():
    payload = {"name": "potassium", "value": 4.1, "unit": "mmol/L",
               "timestamp": "2025-01-14T07:00:00Z"}
    text = render_canonical_text(ResourceKind.LAB_RESULT, payload)
    assert text == ("Name: potassium\n"
                    "Value: 4.1\n"
                    "Unit: mmol/L\n"
                    "Timestamp: 2025-01-14T07:00:00Z")


def test_canonical_text_deterministic_for_equal_payloads():
    payload = {"name": "potassium", "value": 4.1, "unit": "mmol/L",
               "timestamp": "2025-01-14T07:00:00Z"}
    first = render_canonical_text(ResourceKind.LAB_RESULT, dict(payload))
    second = render_canonical_text(ResourceKind.LAB_RESULT, dict(payload))
    assert first.encode() == second.encode()


def test_canonical_text_unknown_extras_sorted():
    payload = {"name": "K", "value": 4, "timestamp": "2025-01-01T00:00:00Z",
               "zeta_flag": "yes", "alpha_code": "x1"}
    lines = render_canonical_text(ResourceKind.LAB_RESULT, payload).splitlines()
    assert lines[-2:] == ["Alpha Code: x1", "Zeta Flag: yes"]


def test_prefetch_snapshot_immutable_under_later_ingest(store):
    snapshot = store.prefetch("p1")
    count = len(snapshot.resources)
    store.ingest_bundle(json.dumps({"entry": [
        {"resource": {"resourceType": "Note", "id": "n-new", "patientId": "p1",
                      "timestamp": "2025-06-01T00:00:00Z", "text": "new note"}},
    ]}))
    assert len(snapshot.resources) == count
    assert snapshot.get("n-new") is None
    assert len(store.prefetch("p1").resources) == count + 1


def test_prefetch_twice_equal_without_ingest(store):
    assert store.prefetch("p1") == store.prefetch("p1")


def test_prefetch_unknown_patient(store):
    with pytest.raises(UnknownPatient):
        store.prefetch("nobody")


def test_span_validation_bounds_and_alignment():
    text = "naïve café"  # multi-byte characters at bytes 2-3 and 9-10
    size = byte_len(text)
    validate_span(Span(0, size), text)
    with pytest.raises(SpanOutOfBounds):
        validate_span(Span(0, size + 1), text)
    with pytest.raises(SpanOutOfBounds):
        validate_span(Span(3, 5), text)  # starts inside the ï code point
    with pytest.raises(SpanOutOfBounds):
        validate_span(Span(5, 5), text)  # empty span


def test_slice_bytes_round_trips_utf8():
    text = "naïve café"
    span = Span(0, byte_len("naïve"))
    assert slice_bytes(text, span) == "naïve"


def test_export_reingest_round_trip(store):
    exported = store.export_bundle()
    clone = RecordStore()
    clone.ingest_bundle(exported)
    assert clone.export_bundle() == exported
    for resource in store.prefetch("p1").resources:
        twin = clone.get(resource.id)
        assert twin is not None
        assert twin.canonical_text == resource.canonical_text
        assert twin == resource


def test_filter_soundness_randomized(store):
    """Property: output is a subset and satisfies every present criterion."""
    rng = random.Random(7)
    everything = {r.id for r in store.prefetch("p1").resources}
    kinds = list(ResourceKind)
    for _ in range(200):
        criteria = FilterCriteria(
            time_range=None if rng.random() < 0.4 else (
                datetime(2024, rng.randint(1, 12), 1, tzinfo=timezone.utc),
                datetime(2025, rng.randint(1, 12), 28, tzinfo=timezone.utc),
            ),
            kinds=None if rng.random() < 0.4 else frozenset(rng.sample(kinds, rng.randint(1, 5))),
            encounter_ids=None if rng.random() < 0.6 else frozenset({rng.choice(["e-0", "e-1", "e-9"])}),
            note_types=None if rng.random() < 0.7 else frozenset({"Discharge Summary"}),
        )
        result = store.filter_resources("p1", criteria)
        assert {r.id for r in result} <= everything
        for resource in result:
            assert criteria.matches(resource)
        ids = [r.id for r in result]
        assert ids == [r.id for r in store.filter_resources("p1", criteria)]  # stable ordering
