"""Shared fixtures: a hand-written patient bundle and scripted-backend helpers."""

from __future__ import annotations

import json

import pytest

from chartcite.llm import ScriptedBackend
from chartcite.records import RecordStore

#: Patient p1. Note n-1 is the byte-offset worked example: the passage
#: "denies chest pain." starts at byte 8 and ends at byte 26.
SAMPLE_BUNDLE = {
    "resourceType": "Bundle",
    "type": "collection",
    "entry": [
        {"resource": {"resourceType": "Note", "id": "n-1", "patientId": "p1",
                      "timestamp": "2025-03-01T09:00:00Z", "encounterId": "e-1",
                      "noteType": "Progress Note",
                      "text": "Patient denies chest pain. Reports mild fatigue."}},
        {"resource": {"resourceType": "Note", "id": "n-2", "patientId": "p1",
                      "timestamp": "2025-02-20T10:00:00Z", "encounterId": "e-1",
                      "noteType": "Discharge Summary",
                      "text": "Discharged home in stable condition on lisinopril 10 mg daily."}},
        {"resource": {"resourceType": "Note", "id": "n-3", "patientId": "p1",
                      "timestamp": "2025-01-15T08:00:00Z", "encounterId": "e-0",
                      "noteType": "Discharge Summary",
                      "text": "Admitted for hyperkalemia; potassium normalized before discharge."}},
        {"resource": {"resourceType": "Note", "id": "n-4", "patientId": "p1",
                      "timestamp": "2024-12-01T08:00:00Z", "encounterId": "e-0",
                      "noteType": "Consult Note",
                      "text": "Nephrology consulted for rising creatinine."}},
        {"resource": {"resourceType": "Note", "id": "n-5", "patientId": "p1",
                      "timestamp": "2024-11-05T08:00:00Z", "encounterId": "e-0",
                      "noteType": "Progress Note",
                      "text": "Started lisinopril for blood-pressure control."}},
        {"resource": {"resourceType": "LabResult", "id": "l-1", "patientId": "p1",
                      "timestamp": "2025-03-01T08:30:00Z", "encounterId": "e-1",
                      "name": "Potassium", "value": 4.1, "unit": "mmol/L"}},
        {"resource": {"resourceType": "LabResult", "id": "l-2", "patientId": "p1",
                      "timestamp": "2025-01-14T07:00:00Z", "encounterId": "e-0",
                      "name": "Potassium", "value": 5.9, "unit": "mmol/L"}},
        {"resource": {"resourceType": "LabResult", "id": "l-3", "patientId": "p1",
                      "timestamp": "2025-01-14T07:00:00Z", "encounterId": "e-0",
                      "name": "Sodium", "value": 140, "unit": "mmol/L"}},
        {"resource": {"resourceType": "VitalSign", "id": "v-1", "patientId": "p1",
                      "timestamp": "2025-03-01T08:45:00Z", "encounterId": "e-1",
                      "name": "Systolic blood pressure", "value": 132, "unit": "mmHg"}},
        {"resource": {"resourceType": "MedicationOrder", "id": "m-1", "patientId": "p1",
                      "timestamp": "2024-11-05T09:00:00Z", "encounterId": "e-0",
                      "name": "Lisinopril", "dose": "10 mg", "route": "oral",
                      "frequency": "daily"}},
        {"resource": {"resourceType": "Immunization", "id": "imm-1", "patientId": "p1",
                      "timestamp": "2024-10-01T12:00:00Z",
                      "name": "Influenza vaccine", "site": "left deltoid"}},
        {"resource": {"resourceType": "Allergy", "id": "a-1", "patientId": "p1",
                      "timestamp": "2020-05-01T00:00:00Z",
                      "name": "Penicillin", "reaction": "rash", "severity": "moderate"}},
        {"resource": {"resourceType": "Encounter", "id": "e-1", "patientId": "p1",
                      "timestamp": "2025-03-01T08:00:00Z",
                      "encounter_type": "Outpatient", "reason": "follow-up"}},
        {"resource": {"resourceType": "Demographics", "id": "d-1", "patientId": "p1",
                      "name": "Test Patient", "birth_date": "1960-04-02", "sex": "F"}},
        {"resource": {"resourceType": "PathologyReport", "id": "path-1", "patientId": "p1",
                      "timestamp": "2024-09-15T10:00:00Z",
                      "text": "Renal biopsy: focal segmental glomerulosclerosis."}},
        {"resource": {"resourceType": "DiagnosticReport", "id": "dx-1", "patientId": "p1",
                      "timestamp": "2024-09-10T10:00:00Z",
                      "text": "Renal ultrasound: kidneys of normal size, no hydronephrosis."}},
        {"resource": {"resourceType": "UploadedDocument", "id": "u-1", "patientId": "p1",
                      "timestamp": "2025-02-25T10:00:00Z", "title": "Outside cardiology letter",
                      "text": "Outside records: normal stress echocardiogram in January."}},
    ],
}


def bundle_json(bundle: dict | None = None) -> str:
    return json.dumps(bundle or SAMPLE_BUNDLE)


@pytest.fixture
def store() -> RecordStore:
    s = RecordStore()
    s.ingest_bundle(bundle_json())
    return s


@pytest.fixture
def snapshot(store):
    return store.prefetch("p1")


def scripted(**queues: list) -> ScriptedBackend:
    """Backend from per-role reply queues; dict replies are JSON-encoded."""
    encoded = {
        role: [reply if isinstance(reply, str) else json.dumps(reply) for reply in replies]
        for role, replies in queues.items()
    }
    return ScriptedBackend(queues=encoded)


def plan_reply(*steps: tuple[str, str], rationale: str = "scripted plan") -> dict:
    return {"tools": [{"tool": tool, "args": args} for tool, args in steps],
            "rationale": rationale}


def passages_reply(*passages: tuple[str, str]) -> dict:
    return {"passages": [{"resource_id": rid, "quote": quote} for rid, quote in passages]}


def claims_reply(*claims: tuple[str, list[int]]) -> dict:
    return {"claims": [{"text": text, "evidence": evidence} for text, evidence in claims]}


def entailed(explanation: str = "stated verbatim in the source") -> dict:
    return {"all_relevant_facts_entailed": True, "explanation": explanation}


def not_entailed(explanation: str) -> dict:
    return {"all_relevant_facts_entailed": False, "explanation": explanation}


def classification_reply(risk: int, inaccuracies: list[str] | None = None,
                         hallucinations: list[str] | None = None,
                         explanation: str = "scripted classification") -> dict:
    return {"risk_level": risk, "explanation": explanation,
            "inaccuracies": inaccuracies or [], "hallucinations": hallucinations or []}


def note_only_fixture(judge_replies: list[dict] | None = None,
                      classification: dict | None = None) -> dict:
    """Full pipeline script over the sample bundle: one NoteAgent step, one claim."""
    queues = {
        "Orchestrator": [json.dumps(plan_reply(("NoteAgent", "chest pain passages")))],
        "NoteAgent": [json.dumps(passages_reply(("n-1", "denies chest pain.")))],
        "Composer": [json.dumps(claims_reply(("Denies chest pain.", [0])))],
    }
    if judge_replies is not None:
        queues["JudgeEntailment"] = [json.dumps(r) for r in judge_replies]
    if classification is not None:
        queues["JudgeClassification"] = [json.dumps(classification)]
    return {"queues": queues}
