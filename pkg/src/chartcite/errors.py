"""Exception types shared across the engine."""


class ChartCiteError(Exception):
    """Base class for every error raised by this package."""


# --- record store ---------------------------------------------------------

class MalformedDocument(ChartCiteError):
    """Bundle text is not JSON or lacks the required entry array."""


class DuplicateId(ChartCiteError):
    """The same resource id appeared twice; the whole ingest is rejected."""


class UnknownPatient(ChartCiteError):
    """No resources stored for the requested patient."""


# --- language-model gateway ------------------------------------------------

class GatewayError(ChartCiteError):
    """Base class for backend/transport failures."""


class BackendUnreachable(GatewayError):
    """The configured endpoint could not be reached."""


class BackendTimeout(GatewayError):
    """The backend did not answer within the configured timeout."""


class SchemaViolation(GatewayError):
    """Reply failed the requested response schema after one retry."""


class FixtureParse(GatewayError):
    """Scripted-backend fixture file is malformed."""


class ScriptExhausted(GatewayError):
    """No scripted reply matches the request and the role queue is empty."""


# --- planning and retrieval agents ----------------------------------------

class EmptyQuery(ChartCiteError):
    """Query text is empty after trimming."""


class PlanParse(ChartCiteError):
    """Planner reply does not describe a valid tool plan."""


class FilterParse(ChartCiteError):
    """Structured-agent reply is not a valid filter object."""


class AllStepsFailed(ChartCiteError):
    """Every step of a plan failed; no evidence could be gathered."""


# --- synthesis -------------------------------------------------------------

class ComposeParse(ChartCiteError):
    """Composer reply does not describe valid claims over the evidence."""


class UncitedClaim(ChartCiteError):
    """Strict mode rejected a claim that carries no citation."""


class DanglingCitation(ChartCiteError):
    """Citation references a resource id absent from the snapshot."""


class SpanOutOfBounds(ChartCiteError):
    """Span violates bounds or UTF-8 code-point alignment."""


# --- verification and analytics --------------------------------------------

class RiskOutOfRange(ChartCiteError):
    """Classification reply carried a risk level outside 1..5."""


class IndexMismatch(ChartCiteError):
    """Judge and human label sets cover different claim indices."""


class EmptyInput(ChartCiteError):
    """An aggregate was requested over zero inputs."""


# --- question taxonomy ------------------------------------------------------

class UnknownCategoryName(ChartCiteError):
    """Categorizer proposed a name outside the fixed category list."""


class ValidationFailed(ChartCiteError):
    """Category assignment violates the taxonomy rules and cannot be repaired."""


class UserErrorQuestion(ChartCiteError):
    """Question was removed by the starter clean (bare retry commands)."""


# --- gold-standard regression ------------------------------------------------

class MissingFixture(ChartCiteError):
    """A gold case directory lacks one of its required files."""


# --- configuration ------------------------------------------------------------

class ConfigurationError(ChartCiteError):
    """No usable backend or data directory is configured."""
