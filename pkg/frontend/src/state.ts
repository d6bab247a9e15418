import { ApiClient, ApiError } from "./api";
import type {
  AnswerJson,
  CriteriaJson,
  EvidenceCardJson,
  ProgressEventJson,
} from "./types";

export type Banner =
  | { kind: "blocked"; reason: string; message: string }
  | { kind: "network"; message: string; retryable: true }
  | { kind: "rejected"; message: string };

export interface OpenCard {
  key: string;
  claimIdx: number;
  citeIdx: number;
  card: EvidenceCardJson;
}

export type FeedbackPhase = "draft" | "sending" | "sent" | "error";

export interface HistoryEntry {
  query: string;
  answerId: string;
  blocked: boolean;
}

export interface StepEntry {
  event: string;
  tool?: string;
  status?: string;
}

function cardKey(answerId: string, claimIdx: number, citeIdx: number): string {
  return `${answerId}/${claimIdx}/${citeIdx}`;
}

/**
 * Single source of truth for the page. The card drawer holds at most one
 * card; cards are cached per (answer, claim, citation) so reopening a chip
 * never refetches; stale chips record citations whose source is gone.
 */
export class ViewState {
  sessionId: string | null = null;
  patientId: string | null = null;
  filters: CriteriaJson = {};
  pendingQuery = false;
  answer: AnswerJson | null = null;
  banner: Banner | null = null;
  openCard: OpenCard | null = null;
  staleChips = new Set<string>();
  steps: StepEntry[] = [];
  history: HistoryEntry[] = [];
  feedbackRating: number | null = null;
  feedbackText = "";
  feedbackPhase: FeedbackPhase = "draft";
  feedbackError: string | null = null;
  readonly cardCache = new Map<string, EvidenceCardJson>();

  get canSubmitFeedback(): boolean {
    return (
      this.answer !== null &&
      this.answer.guardrail_status.state === "Passed" &&
      this.feedbackRating !== null &&
      (this.feedbackPhase === "draft" || this.feedbackPhase === "error")
    );
  }
}

export class App {
  readonly state = new ViewState();
  private listeners: Array<() => void> = [];

  constructor(private readonly api: ApiClient) {}

  onChange(listener: () => void): void {
    this.listeners.push(listener);
  }

  private notify(): void {
    for (const listener of this.listeners) listener();
  }

  async startSession(patientId: string, filters: CriteriaJson = {}): Promise<void> {
    const sessionId = await this.api.createSession(patientId, filters);
    this.state.sessionId = sessionId;
    this.state.patientId = patientId;
    this.state.filters = filters;
    this.state.answer = null;
    this.state.banner = null;
    this.state.openCard = null;
    this.state.staleChips.clear();
    this.state.history = [];
    this.notify();
  }

  async submitQuery(text: string, withProgress = false): Promise<void> {
    if (!this.state.sessionId || this.state.pendingQuery) return;
    this.state.pendingQuery = true;
    this.state.banner = null;
    this.state.steps = [];
    this.state.openCard = null;
    this.notify();
    try {
      const answer = withProgress
        ? await this.api.submitQueryWithProgress(this.state.sessionId, text, (event) =>
            this.recordStep(event),
          )
        : await this.api.submitQuery(this.state.sessionId, text);
      this.acceptAnswer(text, answer);
    } catch (error) {
      if (error instanceof ApiError && error.status === 422) {
        this.state.banner = { kind: "rejected", message: error.detail };
      } else {
        const message = error instanceof Error ? error.message : String(error);
        this.state.banner = { kind: "network", message, retryable: true };
      }
    } finally {
      this.state.pendingQuery = false;
      this.notify();
    }
  }

  private recordStep(event: ProgressEventJson): void {
    if (event.event === "step_started" || event.event === "step_finished") {
      this.state.steps.push({ event: event.event, tool: event.tool, status: event.status });
      this.notify();
    }
  }

  private acceptAnswer(query: string, answer: AnswerJson): void {
    this.state.answer = answer;
    this.state.staleChips.clear();
    this.state.feedbackRating = null;
    this.state.feedbackText = "";
    this.state.feedbackPhase = "draft";
    this.state.feedbackError = null;
    const blocked = answer.guardrail_status.state === "Blocked";
    if (blocked) {
      this.state.banner = {
        kind: "blocked",
        reason: answer.guardrail_status.reason ?? "blocked",
        message: answer.rendered_text,
      };
    }
    this.state.history.push({ query, answerId: answer.id, blocked });
  }

  /** Open one chip's evidence card; the drawer holds exactly one card. */
  async openEvidence(claimIdx: number, citeIdx: number): Promise<void> {
    const answer = this.state.answer;
    if (!answer || !this.state.sessionId) return;
    const key = cardKey(answer.id, claimIdx, citeIdx);
    const cached = this.state.cardCache.get(key);
    if (cached) {
      this.state.openCard = { key, claimIdx, citeIdx, card: cached };
      this.notify();
      return;
    }
    try {
      const card = await this.api.getEvidenceCard(this.state.sessionId, answer.id, claimIdx, citeIdx);
      this.state.cardCache.set(key, card);
      this.state.openCard = { key, claimIdx, citeIdx, card };
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        this.state.staleChips.add(key);
        this.state.openCard = null;
      } else {
        const message = error instanceof Error ? error.message : String(error);
        this.state.banner = { kind: "network", message, retryable: true };
      }
    }
    this.notify();
  }

  closeCard(): void {
    this.state.openCard = null;
    this.notify();
  }

  chipKey(claimIdx: number, citeIdx: number): string {
    return this.state.answer ? cardKey(this.state.answer.id, claimIdx, citeIdx) : "";
  }

  setFeedbackRating(rating: number): void {
    this.state.feedbackRating = rating;
    this.notify();
  }

  setFeedbackText(text: string): void {
    this.state.feedbackText = text;
  }

  async sendFeedback(): Promise<void> {
    const { answer, sessionId, feedbackRating } = this.state;
    if (!answer || !sessionId || feedbackRating === null || !this.state.canSubmitFeedback) {
      return;
    }
    this.state.feedbackPhase = "sending";
    this.state.feedbackError = null;
    this.notify();
    try {
      await this.api.sendFeedback(sessionId, answer.id, feedbackRating,
        this.state.feedbackText || undefined);
      this.state.feedbackPhase = "sent"; // widget disables after success
    } catch (error) {
      this.state.feedbackPhase = "error"; // widget re-enabled
      this.state.feedbackError =
        error instanceof ApiError ? error.detail : String(error);
    }
    this.notify();
  }
}
