import { ApiClient } from "./api";
import { App } from "./state";
import {
  renderAnswer,
  renderBanner,
  renderCardDrawer,
  renderFeedback,
  renderHistory,
  renderSteps,
} from "./render";
import type { CriteriaJson } from "./types";

// Static example prompts shown under the query box.
const EXAMPLE_PROMPTS = [
  "Fill out the tumor board template: date of initial presentation, tumor type and grade, primary site, sites of active disease, clinical and pathologic stage, current and prior therapy, surgeries, and trial involvement.",
  "How has kidney function trended since the last visit? Compare creatinine and eGFR values and note any AKI episodes.",
  "Summarize the most recent discharge note.",
  "List all documented medication changes in the last year with start and stop dates.",
];

function apiBaseUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get("api");
  return fromQuery ?? "";
}

function readFilters(root: Document): CriteriaJson {
  const value = (id: string) => (root.getElementById(id) as HTMLInputElement | null)?.value.trim() ?? "";
  const list = (id: string) =>
    value(id) ? value(id).split(",").map((item) => item.trim()).filter(Boolean) : null;
  const start = value("filter-start");
  const end = value("filter-end");
  const criteria: CriteriaJson = {};
  if (start && end) {
    criteria.time_range = [`${start}T00:00:00Z`, `${end}T23:59:59Z`];
  }
  const encounters = list("filter-encounters");
  if (encounters) criteria.encounter_ids = encounters;
  const noteTypes = list("filter-note-types");
  if (noteTypes) criteria.note_types = noteTypes;
  return criteria;
}

export function mount(root: Document = document): App {
  const app = new App(new ApiClient(apiBaseUrl()));
  const get = (id: string) => root.getElementById(id) as HTMLElement;
  const input = (id: string) => root.getElementById(id) as HTMLInputElement;

  const queryBox = input("query-box");
  let lastQuery = "";

  const redraw = () => {
    renderBanner(get("banner"), app.state.banner, () => void app.submitQuery(lastQuery, true));
    renderAnswer(get("answer"), app);
    renderCardDrawer(get("card-drawer"), app.state.openCard, () => app.closeCard());
    renderSteps(get("steps"), app.state.steps);
    renderHistory(get("history"), app);
    renderFeedback(get("feedback"), app);
    get("session-label").textContent = app.state.sessionId
      ? `patient ${app.state.patientId} · session ${app.state.sessionId.slice(0, 8)}`
      : "no session";
    (get("query-submit") as HTMLButtonElement).disabled =
      !app.state.sessionId || app.state.pendingQuery;
  };
  app.onChange(redraw);

  get("session-start").addEventListener("click", () => {
    const patientId = input("patient-id").value.trim();
    if (!patientId) return;
    void app.startSession(patientId, readFilters(root)).catch((error) => {
      get("session-label").textContent = String(error);
    });
  });

  get("query-submit").addEventListener("click", () => {
    const text = queryBox.value.trim();
    if (!text) return;
    lastQuery = text;
    void app.submitQuery(text, true);
  });

  const prompts = get("example-prompts");
  for (const prompt of EXAMPLE_PROMPTS) {
    const item = root.createElement("li");
    const button = root.createElement("button");
    button.className = "example-prompt";
    button.textContent = prompt;
    button.addEventListener("click", () => {
      queryBox.value = prompt;
    });
    item.append(button);
    prompts.append(item);
  }

  const upload = input("upload-picker");
  upload?.addEventListener("change", () => {
    const file = upload.files?.[0];
    if (!file) return;
    void fetch(`${apiBaseUrl()}/uploads`, { method: "POST", body: file });
  });

  redraw();
  return app;
}

if (typeof document !== "undefined" && document.getElementById("answer")) {
  mount();
}
