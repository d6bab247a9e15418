"""chartcite: citation-grounded search and synthesis over patient records.

Every claim in a composed answer resolves to an exact byte span in the
immutable record store, and an automated two-stage judge pipeline monitors
answer quality against those same spans.
"""

from .records import FilterCriteria, RecordStore, Resource, ResourceKind, Snapshot, Span
from .synthesis import Answer, Citation, Claim, EvidenceCard
from .verifier import MonitorReport, OutputAssessment, VerdictRecord

__version__ = "0.1.0"

__all__ = [
    "Answer",
    "Citation",
    "Claim",
    "EvidenceCard",
    "FilterCriteria",
    "MonitorReport",
    "OutputAssessment",
    "RecordStore",
    "Resource",
    "ResourceKind",
    "Snapshot",
    "Span",
    "VerdictRecord",
    "__version__",
]
