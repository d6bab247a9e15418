// DOM renderers. All content goes through textContent — the UI never
// synthesizes or re-formats server text, and markup in payloads stays inert.

import { splitByByteSpan } from "./highlight";
import type { App, Banner, OpenCard, StepEntry } from "./state";
import type { AnswerJson } from "./types";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderBanner(container: HTMLElement, banner: Banner | null,
                             onRetry?: () => void): void {
  container.replaceChildren();
  if (!banner) return;
  const box = el("div", `banner banner-${banner.kind}`);
  if (banner.kind === "blocked") {
    box.append(el("strong", undefined, `Blocked (${banner.reason}): `));
  }
  box.append(el("span", undefined, banner.message));
  if (banner.kind === "network" && onRetry) {
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", onRetry);
    box.append(retry);
  }
  container.append(box);
}

/**
 * Claims in order, each followed by one numbered chip per citation.
 * Blocked answers render no claim blocks (the banner carries the reason).
 */
export function renderAnswer(container: HTMLElement, app: App): void {
  container.replaceChildren();
  const answer = app.state.answer;
  if (!answer || answer.guardrail_status.state !== "Passed") return;
  let marker = 0;
  answer.claims.forEach((claim, claimIdx) => {
    const block = el("div", "claim");
    block.append(el("span", "claim-text", claim.text));
    claim.citations.forEach((_citation, citeIdx) => {
      marker += 1;
      const chip = el("button", "chip", `[${marker}]`);
      chip.dataset.claim = String(claimIdx);
      chip.dataset.cite = String(citeIdx);
      if (app.state.staleChips.has(app.chipKey(claimIdx, citeIdx))) {
        chip.classList.add("stale");
        chip.title = "source unavailable";
      }
      chip.addEventListener("click", () => void app.openEvidence(claimIdx, citeIdx));
      block.append(chip);
    });
    container.append(block);
  });
}

/** The drawer shows exactly one card; the highlight is byte-exact. */
export function renderCardDrawer(container: HTMLElement, openCard: OpenCard | null,
                                 onClose: () => void): void {
  container.replaceChildren();
  container.classList.toggle("open", openCard !== null);
  if (!openCard) return;
  const { card } = openCard;
  const drawer = el("div", "card");
  const header = el("div", "card-header");
  const title = card.note_type ? `${card.kind} — ${card.note_type}` : card.kind;
  header.append(el("strong", undefined, title));
  if (card.timestamp) header.append(el("span", "card-time", card.timestamp));
  const close = el("button", "card-close", "×");
  close.addEventListener("click", onClose);
  header.append(close);
  drawer.append(header);

  const body = el("pre", "card-context");
  const parts = splitByByteSpan(card.context_text, card.highlight.start, card.highlight.end);
  body.append(document.createTextNode(parts.before));
  body.append(el("mark", "card-highlight", parts.highlighted));
  body.append(document.createTextNode(parts.after));
  drawer.append(body);
  container.append(drawer);
}

export function renderSteps(container: HTMLElement, steps: StepEntry[]): void {
  container.replaceChildren();
  for (const step of steps) {
    const label = step.event === "step_started"
      ? `→ ${step.tool ?? "?"} started`
      : `✓ ${step.tool ?? "?"} ${step.status ?? "finished"}`;
    container.append(el("li", "step", label));
  }
}

export function renderHistory(container: HTMLElement, app: App): void {
  container.replaceChildren();
  for (const entry of app.state.history) {
    const item = el("li", entry.blocked ? "history-entry blocked" : "history-entry");
    item.append(el("span", "history-query", entry.query));
    item.append(el("span", "history-id", entry.answerId.slice(0, 8)));
    container.append(item);
  }
}

export function renderFeedback(container: HTMLElement, app: App): void {
  container.replaceChildren();
  const state = app.state;
  if (!state.answer || state.answer.guardrail_status.state !== "Passed") return;
  const widget = el("div", "feedback");
  widget.append(el("span", "feedback-label", "Rate this answer:"));
  for (let rating = 1; rating <= 5; rating += 1) {
    const button = el("button", "rating", String(rating));
    if (state.feedbackRating === rating) button.classList.add("selected");
    button.disabled = state.feedbackPhase === "sent" || state.feedbackPhase === "sending";
    button.addEventListener("click", () => app.setFeedbackRating(rating));
    widget.append(button);
  }
  const text = el("input", "feedback-text") as HTMLInputElement;
  text.placeholder = "optional comment";
  text.value = state.feedbackText;
  text.disabled = state.feedbackPhase === "sent" || state.feedbackPhase === "sending";
  text.addEventListener("input", () => app.setFeedbackText(text.value));
  widget.append(text);
  const submit = el("button", "feedback-submit",
    state.feedbackPhase === "sent" ? "Thanks!" : "Send");
  submit.disabled = !state.canSubmitFeedback;
  submit.addEventListener("click", () => void app.sendFeedback());
  widget.append(submit);
  if (state.feedbackPhase === "error" && state.feedbackError) {
    widget.append(el("span", "feedback-error", state.feedbackError));
  }
  container.append(widget);
}

export function chipCount(answer: AnswerJson): number {
  return answer.claims.reduce((total, claim) => total + claim.citations.length, 0);
}
