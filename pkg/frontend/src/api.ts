import type {
  AnswerJson,
  CriteriaJson,
  EvidenceCardJson,
  MetricsJson,
  ProgressEventJson,
} from "./types";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

type FetchLike = typeof fetch;

async function errorFrom(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    detail = body.detail ?? body.error ?? detail;
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (...args) => fetch(...args),
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    if (!response.ok) {
      throw await errorFrom(response);
    }
    return response;
  }

  async createSession(patientId: string, criteria: CriteriaJson = {}): Promise<string> {
    const response = await this.request("/sessions", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ patient_id: patientId, criteria }),
    });
    const body = await response.json();
    return body.session_id as string;
  }

  async submitQuery(sessionId: string, text: string, formatTag = "summary"): Promise<AnswerJson> {
    const response = await this.request(`/sessions/${sessionId}/query`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text, format_tag: formatTag }),
    });
    return (await response.json()) as AnswerJson;
  }

  /** Progress variant: NDJSON step events in arrival order, then the answer. */
  async submitQueryWithProgress(
    sessionId: string,
    text: string,
    onEvent: (event: ProgressEventJson) => void,
    formatTag = "summary",
  ): Promise<AnswerJson> {
    const response = await this.request(`/sessions/${sessionId}/query?progress=1`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ text, format_tag: formatTag }),
    });
    let answer: AnswerJson | null = null;
    for await (const line of ndjsonLines(response)) {
      const event = JSON.parse(line) as ProgressEventJson;
      onEvent(event);
      if (event.event === "answer" && event.answer) {
        answer = event.answer;
      }
      if (event.event === "error") {
        throw new ApiError(502, event.detail ?? event.error ?? "query failed");
      }
    }
    if (!answer) {
      throw new ApiError(502, "stream ended without an answer");
    }
    return answer;
  }

  async getEvidenceCard(
    sessionId: string,
    answerId: string,
    claimIdx: number,
    citeIdx: number,
  ): Promise<EvidenceCardJson> {
    const response = await this.request(
      `/sessions/${sessionId}/evidence/${answerId}/${claimIdx}/${citeIdx}`,
    );
    return (await response.json()) as EvidenceCardJson;
  }

  async sendFeedback(
    sessionId: string,
    answerId: string,
    rating: number,
    text?: string,
  ): Promise<void> {
    await this.request("/feedback", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ session_id: sessionId, answer_id: answerId, rating, text }),
    });
  }

  async getMetrics(): Promise<MetricsJson> {
    const response = await this.request("/metrics");
    return (await response.json()) as MetricsJson;
  }
}

async function* ndjsonLines(response: Response): AsyncGenerator<string> {
  if (response.body && typeof response.body.getReader === "function") {
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = "";
    for (;;) {
      const { value, done } = await reader.read();
      if (done) break;
      buffer += decoder.decode(value, { stream: true });
      let newline = buffer.indexOf("\n");
      while (newline >= 0) {
        const line = buffer.slice(0, newline).trim();
        buffer = buffer.slice(newline + 1);
        if (line) yield line;
        newline = buffer.indexOf("\n");
      }
    }
    const tail = buffer.trim();
    if (tail) yield tail;
    return;
  }
  // test environments may hand back a fully-buffered body
  for (const line of (await response.text()).split("\n")) {
    if (line.trim()) yield line.trim();
  }
}
