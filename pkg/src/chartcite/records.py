"""Span-indexed, immutable store for patient record bundles.

Bundles are a restricted, hand-writable JSON shape: a top-level object with
an ``entry`` array, each entry wrapping one ``resource`` object whose
``resourceType`` names a :class:`ResourceKind` member. Envelope fields are
``id``, ``patientId``, ``encounterId`` and (for notes) ``noteType``; every
remaining field, including ``timestamp``, is clinical payload. The canonical
text each citation points into is derived from the payload alone, so equal
payloads always yield byte-identical text.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable

from .errors import DuplicateId, MalformedDocument, SpanOutOfBounds, UnknownPatient


class ResourceKind(str, Enum):
    NOTE = "Note"
    DIAGNOSTIC_REPORT = "DiagnosticReport"
    PATHOLOGY_REPORT = "PathologyReport"
    LAB_RESULT = "LabResult"
    VITAL_SIGN = "VitalSign"
    MEDICATION_ORDER = "MedicationOrder"
    IMMUNIZATION = "Immunization"
    ALLERGY = "Allergy"
    ENCOUNTER = "Encounter"
    DEMOGRAPHICS = "Demographics"
    UPLOADED_DOCUMENT = "UploadedDocument"


#: Kinds whose canonical text is the payload narrative verbatim.
NARRATIVE_KINDS = frozenset({
    ResourceKind.NOTE,
    ResourceKind.DIAGNOSTIC_REPORT,
    ResourceKind.PATHOLOGY_REPORT,
    ResourceKind.UPLOADED_DOCUMENT,
})

#: Envelope fields excluded from the payload (``timestamp`` stays in).
_ENVELOPE_FIELDS = ("resourceType", "id", "patientId", "encounterId", "noteType")

#: Per-kind extra payload fields rendered, in order, after the four
#: universal lines (Name, Value, Unit, Timestamp).
_KIND_EXTRAS: dict[ResourceKind, tuple[tuple[str, str], ...]] = {
    ResourceKind.LAB_RESULT: (("reference_range", "Reference Range"), ("status", "Status")),
    ResourceKind.VITAL_SIGN: (("status", "Status"),),
    ResourceKind.MEDICATION_ORDER: (
        ("dose", "Dose"), ("route", "Route"), ("frequency", "Frequency"), ("status", "Status"),
    ),
    ResourceKind.IMMUNIZATION: (("lot_number", "Lot Number"), ("site", "Site")),
    ResourceKind.ALLERGY: (("reaction", "Reaction"), ("severity", "Severity"), ("status", "Status")),
    ResourceKind.ENCOUNTER: (
        ("encounter_type", "Encounter Type"), ("reason", "Reason"),
        ("location", "Location"), ("status", "Status"),
    ),
    ResourceKind.DEMOGRAPHICS: (("birth_date", "Birth Date"), ("sex", "Sex"), ("language", "Language")),
}

_UNIVERSAL_FIELDS = (("name", "Name"), ("value", "Value"), ("unit", "Unit"), ("timestamp", "Timestamp"))


@dataclass(frozen=True, order=True)
class Span:
    """Half-open byte range [start, end) into a resource's canonical text."""

    start: int
    end: int

    def length(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class Resource:
    """One immutable record item."""

    id: str
    patient_id: str
    kind: ResourceKind
    timestamp: datetime | None
    encounter_id: str | None
    note_type: str | None
    payload: dict[str, Any]
    canonical_text: str


@dataclass(frozen=True)
class FilterCriteria:
    """Subset selection over a patient's resources; empty criteria match all."""

    time_range: tuple[datetime, datetime] | None = None
    encounter_ids: frozenset[str] | None = None
    kinds: frozenset[ResourceKind] | None = None
    note_types: frozenset[str] | None = None

    def __post_init__(self) -> None:
        if self.time_range is not None and self.time_range[0] > self.time_range[1]:
            raise ValueError("time_range start must not exceed end")

    def matches(self, resource: Resource) -> bool:
        if self.time_range is not None:
            if resource.timestamp is None:
                return False
            lo, hi = self.time_range
            if not (lo <= resource.timestamp <= hi):
                return False
        if self.encounter_ids is not None and resource.encounter_id not in self.encounter_ids:
            return False
        if self.kinds is not None and resource.kind not in self.kinds:
            return False
        if self.note_types is not None and resource.note_type not in self.note_types:
            return False
        return True

    def restrict_kinds(self, allowed: Iterable[ResourceKind]) -> "FilterCriteria":
        """Criteria narrowed to ``allowed`` intersected with any kinds filter."""
        allowed_set = frozenset(allowed)
        kinds = allowed_set if self.kinds is None else self.kinds & allowed_set
        return FilterCriteria(self.time_range, self.encounter_ids, kinds, self.note_types)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FilterCriteria":
        time_range = None
        if data.get("time_range") is not None:
            raw = data["time_range"]
            if not isinstance(raw, (list, tuple)) or len(raw) != 2:
                raise ValueError("time_range must be a [start, end] pair")
            time_range = (parse_instant(raw[0]), parse_instant(raw[1]))
        kinds = None
        if data.get("kinds") is not None:
            kinds = frozenset(ResourceKind(k) for k in data["kinds"])
        encounter_ids = None
        if data.get("encounter_ids") is not None:
            encounter_ids = frozenset(str(e) for e in data["encounter_ids"])
        note_types = None
        if data.get("note_types") is not None:
            note_types = frozenset(str(t) for t in data["note_types"])
        return cls(time_range, encounter_ids, kinds, note_types)


@dataclass
class IngestSummary:
    counts: dict[ResourceKind, int] = field(default_factory=dict)
    skipped: int = 0
    warnings: list[str] = field(default_factory=list)


def parse_instant(value: str) -> datetime:
    """Parse an ISO-8601 instant; naive values are taken as UTC."""
    if not isinstance(value, str):
        raise ValueError(f"not an instant: {value!r}")
    text = value[:-1] + "+00:00" if value.endswith("Z") else value
    parsed = datetime.fromisoformat(text)
    if parsed.tzinfo is None:
        parsed = parsed.replace(tzinfo=timezone.utc)
    return parsed.astimezone(timezone.utc)


def format_instant(value: datetime) -> str:
    """Render a UTC instant as ...Z with seconds precision."""
    value = value.astimezone(timezone.utc)
    spec = "microseconds" if value.microsecond else "seconds"
    return value.isoformat(timespec=spec).replace("+00:00", "Z")


def byte_len(text: str) -> int:
    return len(text.encode("utf-8"))


def validate_span(span: Span, text: str) -> None:
    """Raise SpanOutOfBounds unless the span is in bounds and code-point aligned."""
    data = text.encode("utf-8")
    if not (0 <= span.start < span.end <= len(data)):
        raise SpanOutOfBounds(f"span [{span.start},{span.end}) outside 0..{len(data)}")
    for offset in (span.start, span.end):
        if offset < len(data) and (data[offset] & 0xC0) == 0x80:
            raise SpanOutOfBounds(f"offset {offset} splits a UTF-8 code point")


def slice_bytes(text: str, span: Span) -> str:
    """Substring of ``text`` at a byte span; validates the span first."""
    validate_span(span, text)
    return text.encode("utf-8")[span.start:span.end].decode("utf-8")


def _render_value(value: Any) -> str:
    if isinstance(value, str):
        return value
    return json.dumps(value, ensure_ascii=False)


def render_canonical_text(kind: ResourceKind, payload: dict[str, Any]) -> str:
    """Deterministic citation target for a payload.

    Narrative kinds pass their text through verbatim. Structured kinds render
    one ``Label: value`` line per present field: Name, Value, Unit, Timestamp,
    the kind's known extras, then any leftover fields in alphabetical order.
    """
    if kind in NARRATIVE_KINDS:
        return str(payload.get("text", ""))
    lines: list[str] = []
    consumed: set[str] = set()
    ordered = _UNIVERSAL_FIELDS + _KIND_EXTRAS.get(kind, ())
    for field_name, label in ordered:
        if payload.get(field_name) is not None:
            lines.append(f"{label}: {_render_value(payload[field_name])}")
            consumed.add(field_name)
    for field_name in sorted(payload):
        if field_name in consumed or field_name == "text" or payload[field_name] is None:
            continue
        label = field_name.replace("_", " ").title()
        lines.append(f"{label}: {_render_value(payload[field_name])}")
    return "\n".join(lines)


def resource_from_entry(body: dict[str, Any]) -> Resource:
    """Build a Resource from one bundle entry body; raises ValueError on bad entries."""
    kind_name = body.get("resourceType")
    try:
        kind = ResourceKind(kind_name)
    except ValueError:
        raise ValueError(f"unrecognized resource kind {kind_name!r}") from None
    resource_id = body.get("id")
    patient_id = body.get("patientId")
    if not resource_id or not isinstance(resource_id, str):
        raise ValueError("entry missing string id")
    if not patient_id or not isinstance(patient_id, str):
        raise ValueError(f"entry {resource_id!r} missing string patientId")
    payload = {k: v for k, v in body.items() if k not in _ENVELOPE_FIELDS}
    timestamp = None
    if payload.get("timestamp") is not None:
        timestamp = parse_instant(payload["timestamp"])
    elif kind is not ResourceKind.DEMOGRAPHICS:
        raise ValueError(f"entry {resource_id!r} of kind {kind.value} missing timestamp")
    if kind in NARRATIVE_KINDS and not isinstance(payload.get("text"), str):
        raise ValueError(f"entry {resource_id!r} of kind {kind.value} missing text")
    return Resource(
        id=resource_id,
        patient_id=patient_id,
        kind=kind,
        timestamp=timestamp,
        encounter_id=body.get("encounterId"),
        note_type=body.get("noteType") if kind is ResourceKind.NOTE else None,
        payload=payload,
        canonical_text=render_canonical_text(kind, payload),
    )


def resource_to_entry(resource: Resource) -> dict[str, Any]:
    body: dict[str, Any] = {"resourceType": resource.kind.value, "id": resource.id,
                            "patientId": resource.patient_id}
    if resource.encounter_id is not None:
        body["encounterId"] = resource.encounter_id
    if resource.note_type is not None:
        body["noteType"] = resource.note_type
    body.update(resource.payload)
    return {"resource": body}


_OLDEST = datetime.min.replace(tzinfo=timezone.utc)


def _chronological(resources: Iterable[Resource]) -> list[Resource]:
    """Newest first; timestamp ties and timestamp-less records order by id ascending."""
    ordered = sorted(resources, key=lambda r: r.id)
    ordered.sort(key=lambda r: r.timestamp or _OLDEST, reverse=True)
    return ordered


@dataclass(frozen=True)
class Snapshot:
    """Immutable view of one patient's resources; safe to share across threads."""

    patient_id: str
    resources: tuple[Resource, ...]

    def get(self, resource_id: str) -> Resource | None:
        return self._by_id.get(resource_id)

    @property
    def _by_id(self) -> dict[str, Resource]:
        cached = self.__dict__.get("_by_id_cache")
        if cached is None:
            cached = {r.id: r for r in self.resources}
            object.__setattr__(self, "_by_id_cache", cached)
        return cached

    def filter(self, criteria: FilterCriteria | None = None) -> list[Resource]:
        criteria = criteria or FilterCriteria()
        return [r for r in self.resources if criteria.matches(r)]

    def counts_by_kind(self) -> dict[ResourceKind, int]:
        counts: dict[ResourceKind, int] = {}
        for resource in self.resources:
            counts[resource.kind] = counts.get(resource.kind, 0) + 1
        return counts


class RecordStore:
    """Single-writer store over immutable resources."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._by_id: dict[str, Resource] = {}
        self._by_patient: dict[str, list[Resource]] = {}

    def ingest_bundle(self, document: str) -> IngestSummary:
        """Ingest a bundle atomically; a duplicate id rejects the whole document."""
        try:
            parsed = json.loads(document)
        except json.JSONDecodeError as exc:
            raise MalformedDocument(f"bundle is not valid JSON: {exc}") from exc
        if not isinstance(parsed, dict) or not isinstance(parsed.get("entry"), list):
            raise MalformedDocument("bundle must be an object with an entry array")

        summary = IngestSummary()
        staged: dict[str, Resource] = {}
        for position, entry in enumerate(parsed["entry"]):
            body = entry.get("resource") if isinstance(entry, dict) else None
            if not isinstance(body, dict):
                summary.skipped += 1
                summary.warnings.append(f"entry {position}: no resource object")
                continue
            try:
                resource = resource_from_entry(body)
            except ValueError as exc:
                summary.skipped += 1
                summary.warnings.append(f"entry {position}: {exc}")
                continue
            if resource.id in staged:
                raise DuplicateId(f"id {resource.id!r} appears twice in the bundle")
            staged[resource.id] = resource

        with self._lock:
            for resource_id in staged:
                if resource_id in self._by_id:
                    raise DuplicateId(f"id {resource_id!r} already stored")
            for resource in staged.values():
                self._by_id[resource.id] = resource
                self._by_patient.setdefault(resource.patient_id, []).append(resource)
                summary.counts[resource.kind] = summary.counts.get(resource.kind, 0) + 1
        return summary

    def patients(self) -> frozenset[str]:
        with self._lock:
            return frozenset(self._by_patient)

    def has_patient(self, patient_id: str) -> bool:
        with self._lock:
            return patient_id in self._by_patient

    def prefetch(self, patient_id: str) -> Snapshot:
        """Pin an immutable snapshot; later ingests never mutate it."""
        with self._lock:
            if patient_id not in self._by_patient:
                raise UnknownPatient(patient_id)
            resources = tuple(_chronological(self._by_patient[patient_id]))
        return Snapshot(patient_id=patient_id, resources=resources)

    def filter_resources(self, patient_id: str, criteria: FilterCriteria | None = None) -> list[Resource]:
        return self.prefetch(patient_id).filter(criteria)

    def get(self, resource_id: str) -> Resource | None:
        with self._lock:
            return self._by_id.get(resource_id)

    def export_bundle(self) -> str:
        """Whole store as bundle JSON; re-ingesting reproduces the store."""
        with self._lock:
            resources = sorted(self._by_id.values(), key=lambda r: (r.patient_id, r.id))
        bundle = {"resourceType": "Bundle", "type": "collection",
                  "entry": [resource_to_entry(r) for r in resources]}
        return json.dumps(bundle, ensure_ascii=False, indent=2, sort_keys=True)
