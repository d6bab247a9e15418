// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api";
import { App } from "../src/state";
import { chipCount, renderAnswer, renderBanner, renderCardDrawer, renderFeedback } from "../src/render";
import type { AnswerJson, EvidenceCardJson } from "../src/types";
import multibyte from "./fixtures/multibyte.json";

const answer = multibyte.answer as unknown as AnswerJson;
const blockedAnswer = multibyte.blocked_answer as unknown as AnswerJson;
const cards = multibyte.cards as unknown as Record<string, EvidenceCardJson>;

function appWithAnswer(current: AnswerJson): App {
  const app = new App(new ApiClient("", async () => new Response("{}")));
  app.state.sessionId = "s";
  app.state.answer = current;
  return app;
}

let container: HTMLElement;

beforeEach(() => {
  container = document.createElement("div");
  document.body.replaceChildren(container);
});

describe("answer rendering", () => {
  it("renders one chip per citation: 2 claims / 3 citations means 3 chips", () => {
    renderAnswer(container, appWithAnswer(answer));
    const chips = container.querySelectorAll("button.chip");
    expect(answer.claims.length).toBe(2);
    expect(chipCount(answer)).toBe(3);
    expect(chips.length).toBe(3);
    expect([...chips].map((chip) => chip.textContent)).toEqual(["[1]", "[2]", "[3]"]);
  });

  it("renders chips per claim matching that claim's citation count", () => {
    renderAnswer(container, appWithAnswer(answer));
    const blocks = container.querySelectorAll(".claim");
    blocks.forEach((block, index) => {
      expect(block.querySelectorAll(".chip").length)
        .toBe(answer.claims[index]!.citations.length);
    });
  });

  it("renders claim text verbatim from the server JSON", () => {
    renderAnswer(container, appWithAnswer(answer));
    const texts = [...container.querySelectorAll(".claim-text")].map((node) => node.textContent);
    expect(texts).toEqual(answer.claims.map((claim) => claim.text));
  });

  it("never interprets payload text as markup", () => {
    const hostile: AnswerJson = {
      ...answer,
      claims: [{ text: '<img src=x onerror="window.__pwned = true">', citations: [] }],
    };
    renderAnswer(container, appWithAnswer(hostile));
    expect(container.querySelector("img")).toBeNull();
    expect(container.querySelector(".claim-text")?.textContent).toContain("<img");
  });

  it("blocked answers render no claim blocks; the banner carries the reason", () => {
    const app = appWithAnswer(blockedAnswer);
    renderAnswer(container, app);
    expect(container.querySelectorAll(".claim").length).toBe(0);
    const bannerHost = document.createElement("div");
    renderBanner(bannerHost, {
      kind: "blocked",
      reason: blockedAnswer.guardrail_status.reason ?? "",
      message: blockedAnswer.rendered_text,
    });
    expect(bannerHost.textContent).toContain("injection-suspect");
    expect(bannerHost.textContent).toContain(blockedAnswer.rendered_text);
  });

  it("marks stale chips", () => {
    const app = appWithAnswer(answer);
    app.state.staleChips.add(`${answer.id}/0/0`);
    renderAnswer(container, app);
    const chip = container.querySelector("button.chip");
    expect(chip?.classList.contains("stale")).toBe(true);
    expect(chip?.getAttribute("title")).toBe("source unavailable");
  });
});

describe("card drawer", () => {
  it("shows the highlighted bytes inside a mark element", () => {
    const card = cards["0/0"]!;
    renderCardDrawer(container, { key: "k", claimIdx: 0, citeIdx: 0, card }, () => undefined);
    const mark = container.querySelector("mark");
    expect(mark?.textContent).toBe(card.snippet);
    expect(container.querySelector(".card-context")?.textContent).toBe(card.context_text);
  });

  it("renders nothing when no card is open", () => {
    renderCardDrawer(container, null, () => undefined);
    expect(container.children.length).toBe(0);
  });
});

describe("feedback widget", () => {
  it("submit stays disabled until a rating is chosen", () => {
    const app = appWithAnswer(answer);
    renderFeedback(container, app);
    const submit = container.querySelector<HTMLButtonElement>(".feedback-submit");
    expect(submit?.disabled).toBe(true);
    app.setFeedbackRating(5);
    renderFeedback(container, app);
    expect(container.querySelector<HTMLButtonElement>(".feedback-submit")?.disabled).toBe(false);
  });

  it("widget disables after success", () => {
    const app = appWithAnswer(answer);
    app.state.feedbackRating = 5;
    app.state.feedbackPhase = "sent";
    renderFeedback(container, app);
    expect(container.querySelector<HTMLButtonElement>(".feedback-submit")?.disabled).toBe(true);
    const ratings = container.querySelectorAll<HTMLButtonElement>("button.rating");
    ratings.forEach((button) => expect(button.disabled).toBe(true));
  });
});
