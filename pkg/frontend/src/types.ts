// Mirrors of the server's JSON schemas. The UI never invents fields: every
// rendered string comes verbatim from these payloads.

export interface SpanJson {
  start: number;
  end: number;
}

export interface CitationJson {
  resource_id: string;
  span: SpanJson;
}

export interface ClaimJson {
  text: string;
  citations: CitationJson[];
}

export interface GuardrailStatusJson {
  state: "Passed" | "Blocked";
  reason?: string;
}

export interface AnswerJson {
  schema_version: number;
  id: string;
  patient_id: string;
  format_tag: string;
  guardrail_status: GuardrailStatusJson;
  claims: ClaimJson[];
  rendered_text: string;
}

export interface EvidenceCardJson {
  schema_version: number;
  resource_id: string;
  kind: string;
  timestamp: string | null;
  note_type: string | null;
  context_text: string;
  highlight: SpanJson;
  source_span: SpanJson;
  snippet: string;
}

export interface FeedbackSummaryJson {
  histogram: Record<string, number>;
  n: number;
  positive_count: number;
  positive_rate: number | null;
}

export interface MetricsJson {
  query_count: number;
  feedback_summary: FeedbackSummaryJson;
  monitor_report: unknown | null;
}

export interface CriteriaJson {
  time_range?: [string, string] | null;
  encounter_ids?: string[] | null;
  kinds?: string[] | null;
  note_types?: string[] | null;
}

export interface ProgressEventJson {
  event: string;
  tool?: string;
  args?: string;
  status?: string;
  answer?: AnswerJson;
  error?: string;
  detail?: string;
}
