/**
 * DOM wiring: login prompt, assignment list, side-by-side letter panels
 * (with a sequential one-letter-at-a-time toggle), score steppers, and
 * submission with optimistic completion rollback.
 *
 * All model output is rendered with textContent; nothing from the server
 * is ever interpreted as markup.
 */

import { ApiClient, ApiError, AuthRequiredError, NetworkError } from "./api.js";
import {
  FormState,
  beginSubmit,
  canSubmit,
  emptyForm,
  highlightedField,
  resolveAccepted,
  resolveRejected,
  setScore,
  total,
} from "./form.js";
import {
  Assignment,
  CaseOutputs,
  DIMENSIONS,
  DIMENSION_LABELS,
  MAX_SCORE,
  MIN_SCORE,
} from "./types.js";
import { CompletionTracker, buildPanels, summarize } from "./view.js";

const TOKEN_KEY = "evaluator-token";
const EVALUATOR_KEY = "evaluator-id";

interface Settings {
  baseUrl: string;
  studyId: string;
}

function readSettings(): Settings {
  const root = document.getElementById("app");
  return {
    baseUrl: root?.dataset.baseUrl ?? "http://127.0.0.1:8080",
    studyId: root?.dataset.studyId ?? "",
  };
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) {
    node.className = className;
  }
  if (text !== undefined) {
    node.textContent = text;
  }
  return node;
}

function banner(kind: "error" | "info", text: string, onRetry?: () => void): HTMLElement {
  const box = el("div", `banner banner-${kind}`, text);
  if (onRetry) {
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", onRetry);
    box.append(" ", retry);
  }
  return box;
}

class App {
  private root: HTMLElement;
  private tracker = new CompletionTracker();
  private client: ApiClient | null = null;
  private evaluatorId = "";
  private submissionInFlight = false;

  constructor(private settings: Settings) {
    this.root = document.getElementById("app") ?? document.body;
  }

  start(): void {
    const token = sessionStorage.getItem(TOKEN_KEY);
    const evaluator = sessionStorage.getItem(EVALUATOR_KEY);
    if (!token || !evaluator) {
      this.renderLogin();
      return;
    }
    this.evaluatorId = evaluator;
    this.client = new ApiClient(this.settings.baseUrl, this.settings.studyId, token);
    void this.loadAssignments();
  }

  private renderLogin(message?: string): void {
    this.root.replaceChildren();
    const form = el("form", "login");
    form.append(el("h1", undefined, "Reviewer sign-in"));
    if (message) {
      form.append(banner("error", message));
    }
    const evaluatorInput = el("input");
    evaluatorInput.placeholder = "evaluator id";
    const tokenInput = el("input");
    tokenInput.type = "password";
    tokenInput.placeholder = "access token";
    const submit = el("button", undefined, "Sign in");
    submit.type = "submit";
    form.append(evaluatorInput, tokenInput, submit);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      sessionStorage.setItem(EVALUATOR_KEY, evaluatorInput.value.trim());
      sessionStorage.setItem(TOKEN_KEY, tokenInput.value.trim());
      this.start();
    });
    this.root.append(form);
  }

  private async loadAssignments(): Promise<void> {
    this.root.replaceChildren(el("p", "loading", "Loading assignments..."));
    try {
      const response = await this.client!.fetchAssignments(this.evaluatorId);
      this.tracker.seed(response.assignments);
      this.renderAssignments(response.assignments, response.closed);
    } catch (error) {
      this.handleTopLevelError(error, () => void this.loadAssignments());
    }
  }

  private handleTopLevelError(error: unknown, retry: () => void): void {
    if (error instanceof AuthRequiredError) {
      sessionStorage.removeItem(TOKEN_KEY);
      this.renderLogin("Sign-in required.");
      return;
    }
    const text =
      error instanceof NetworkError
        ? "Network problem while talking to the study server."
        : error instanceof Error
          ? error.message
          : String(error);
    this.root.replaceChildren(banner("error", text, retry));
  }

  private renderAssignments(assignments: Assignment[], closed: boolean): void {
    this.root.replaceChildren();
    const summary = summarize(assignments);
    const header = el("header");
    header.append(el("h1", undefined, "Case review"));
    header.append(
      el(
        "p",
        "summary",
        `${summary.caseCount} case(s), ${summary.panelCount} outputs, ${summary.remaining} remaining`,
      ),
    );
    if (closed) {
      header.append(banner("info", "This study is closed; submissions are disabled."));
    }
    this.root.append(header);
    if (summary.allDone) {
      this.root.append(el("p", "all-done", "All done. Thank you!"));
      return;
    }
    const list = el("ul", "cases");
    for (const assignment of assignments) {
      const item = el("li");
      const open = el("button", "case-link", assignment.case_id);
      const remaining = assignment.letters.filter(
        (letter) => !this.tracker.isCompleted(assignment.case_id, letter),
      );
      open.append(el("span", "remaining", ` ${remaining.length} to score`));
      open.addEventListener("click", () => void this.openCase(assignment));
      item.append(open);
      list.append(item);
    }
    this.root.append(list);
  }

  private async openCase(assignment: Assignment): Promise<void> {
    this.root.replaceChildren(el("p", "loading", `Loading ${assignment.case_id}...`));
    try {
      const outputs = await this.client!.fetchOutputs(assignment.case_id);
      this.renderCase(assignment, outputs);
    } catch (error) {
      this.handleTopLevelError(error, () => void this.openCase(assignment));
    }
  }

  private renderCase(assignment: Assignment, outputs: CaseOutputs): void {
    this.root.replaceChildren();
    const back = el("button", "back", "Back to cases");
    back.addEventListener("click", () => void this.loadAssignments());
    this.root.append(back);
    this.root.append(el("h1", undefined, `Case ${assignment.case_id}`));

    const summary = el("section", "case-summary");
    summary.append(el("h2", undefined, "Patient record"));
    summary.append(el("p", undefined, `History: ${outputs.case.history}`));
    summary.append(el("p", undefined, `Physical signs: ${outputs.case.physical_signs}`));
    summary.append(el("p", undefined, `Symptoms: ${outputs.case.symptoms}`));
    const images = el("div", "images");
    for (const url of outputs.case.image_urls) {
      const img = el("img");
      img.src = url;
      img.alt = "lesion image";
      images.append(img);
    }
    summary.append(images);
    this.root.append(summary);

    const sequentialToggle = el("label", "sequential-toggle");
    const checkbox = el("input");
    checkbox.type = "checkbox";
    sequentialToggle.append(checkbox, " one output at a time");
    this.root.append(sequentialToggle);

    const panels = el("div", "panels side-by-side");
    for (const panel of buildPanels(outputs)) {
      panels.append(this.renderPanel(assignment, panel.letter, panel.fields));
    }
    checkbox.addEventListener("change", () => {
      panels.classList.toggle("sequential", checkbox.checked);
      panels.classList.toggle("side-by-side", !checkbox.checked);
    });
    this.root.append(panels);
  }

  private renderPanel(
    assignment: Assignment,
    letter: string,
    fields: { label: string; text: string }[],
  ): HTMLElement {
    const panel = el("section", "panel");
    panel.append(el("h2", undefined, `Output ${letter}`));
    for (const field of fields) {
      const block = el("div", "field");
      block.append(el("h3", undefined, field.label));
      block.append(el("pre", "output-text", field.text));
      panel.append(block);
    }
    if (this.tracker.isCompleted(assignment.case_id, letter)) {
      panel.append(el("p", "scored", "Already scored."));
      return panel;
    }
    panel.append(this.renderForm(assignment.case_id, letter, panel));
    return panel;
  }

  private renderForm(caseId: string, letter: string, panel: HTMLElement): HTMLElement {
    let state: FormState = emptyForm();
    const form = el("form", "score-form");
    const inputs = new Map<string, HTMLInputElement>();
    const totalLine = el("p", "total", "Total: 0 / 60");
    const message = el("p", "form-message", "");
    const submit = el("button", undefined, "Submit scores");
    submit.type = "submit";
    submit.disabled = true;

    const refresh = (): void => {
      totalLine.textContent = `Total: ${total(state)} / 60`;
      submit.disabled = !canSubmit(state) || this.submissionInFlight;
      const highlighted = highlightedField(state);
      for (const [dimension, input] of inputs) {
        input.classList.toggle("invalid", highlighted === dimension);
      }
      if (state.phase === "rejected" && state.rejection) {
        message.textContent =
          state.rejection.code === "duplicate"
            ? "Already scored."
            : state.rejection.message;
        message.className = "form-message error";
      } else if (state.phase === "accepted") {
        message.textContent = "Scores recorded.";
        message.className = "form-message ok";
      } else {
        message.textContent = "";
        message.className = "form-message";
      }
    };

    for (const dimension of DIMENSIONS) {
      const row = el("label", "score-row");
      row.append(el("span", undefined, DIMENSION_LABELS[dimension]));
      const input = el("input");
      input.type = "number";
      input.min = String(MIN_SCORE);
      input.max = String(MAX_SCORE);
      input.step = "1";
      input.addEventListener("input", () => {
        const parsed = input.value === "" ? null : Number(input.value);
        state = setScore(state, dimension, parsed);
        refresh();
      });
      inputs.set(dimension, input);
      row.append(input);
      form.append(row);
    }
    form.append(totalLine, message, submit);

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const started = beginSubmit(state, {
        evaluator_id: this.evaluatorId,
        case_id: caseId,
        letter,
      });
      if (!started) {
        return;
      }
      state = started.state;
      this.submissionInFlight = true;
      this.tracker.markPending(caseId, letter);
      refresh();
      this.client!
        .submitSheet(started.payload)
        .then(() => {
          state = resolveAccepted(state);
          this.tracker.confirm(caseId, letter);
          panel.classList.add("completed");
        })
        .catch((error: unknown) => {
          this.tracker.rollback(caseId, letter);
          if (error instanceof ApiError) {
            state = resolveRejected(state, {
              code: error.code,
              message: error.message,
              field: error.field,
            });
          } else if (error instanceof AuthRequiredError) {
            sessionStorage.removeItem(TOKEN_KEY);
            this.renderLogin("Sign-in required.");
            return;
          } else {
            state = resolveRejected(state, {
              code: "network",
              message: "Network problem; your scores were not recorded.",
            });
          }
        })
        .finally(() => {
          this.submissionInFlight = false;
          refresh();
        });
    });

    refresh();
    return form;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  new App(readSettings()).start();
}
