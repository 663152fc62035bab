// DOM construction for the review console. Every displayed value comes
// from service responses; the UI computes nothing itself.

import { ApiError, ServiceClient } from "./api.js";
import { ReviewSession } from "./session.js";
import type {
  Detoxifiability,
  DetoxifiableRating,
  DetoxMode,
  DetoxResult,
  ExplanationRatings,
  Job,
  Rating,
  RatingSchema,
  ReviewRecord,
} from "./types.js";

const EXPLANATION_METRICS: (keyof ExplanationRatings)[] = [
  "relevance",
  "comprehensiveness",
  "convincing",
];

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

export class ConsoleApp {
  private root: HTMLElement;
  private client: ServiceClient;
  private session: ReviewSession;
  private schema: RatingSchema | null = null;

  private resultPanel: HTMLElement;
  private ratingPanel: HTMLElement;
  private historyPanel: HTMLElement;
  private statusLine: HTMLElement;
  private input: HTMLTextAreaElement;
  private modeSelect: HTMLSelectElement;

  constructor(root: HTMLElement, client: ServiceClient, session: ReviewSession) {
    this.root = root;
    this.client = client;
    this.session = session;
    this.resultPanel = el("section", "result-panel");
    this.ratingPanel = el("section", "rating-panel");
    this.historyPanel = el("section", "history-panel");
    this.statusLine = el("p", "status");
    this.input = el("textarea");
    this.modeSelect = el("select");
  }

  async start(): Promise<void> {
    this.schema = await this.client.ratingSchema();
    this.root.replaceChildren(
      this.buildSubmitForm(),
      this.statusLine,
      this.resultPanel,
      this.ratingPanel,
      this.historyPanel,
    );
  }

  private buildSubmitForm(): HTMLElement {
    const form = el("form", "submit-form");
    this.input.name = "text";
    this.input.placeholder = "Paste the text to detoxify";
    this.modeSelect.name = "mode";
    for (const mode of ["cot_expl", "prompted", "vanilla"]) {
      const option = el("option", undefined, mode);
      option.value = mode;
      this.modeSelect.append(option);
    }
    const button = el("button", "submit-button", "Detoxify");
    button.type = "submit";
    form.append(this.input, this.modeSelect, button);
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void this.submitText();
    });
    return form;
  }

  async submitText(): Promise<void> {
    const text = this.input.value.trim();
    if (!text) {
      this.setStatus("Enter some text first.");
      return;
    }
    this.setStatus("Submitting...");
    try {
      const job = await this.client.detoxify(text, this.modeSelect.value as DetoxMode);
      this.session.activate(job);
      this.setStatus(`Job ${job.id} ${job.state}.`);
      this.renderResult(job);
      this.renderRatingPanel();
      await this.refreshHistory();
    } catch (error) {
      this.setStatus(error instanceof Error ? error.message : String(error));
    }
  }

  private setStatus(message: string): void {
    this.statusLine.textContent = message;
  }

  private renderResult(job: Job): void {
    const result = job.result as DetoxResult | null;
    this.resultPanel.replaceChildren();
    if (!result) {
      this.resultPanel.append(el("p", "error", job.error ?? "No result."));
      return;
    }

    // Source text is blurred until the reviewer opts in.
    const source = el("div", "source-text blurred", String(job.payload.text ?? ""));
    source.title = "Click to reveal the original text";
    source.addEventListener("click", () => source.classList.toggle("blurred"));
    this.resultPanel.append(el("h2", undefined, "Source"), source);

    if (result.warning) {
      this.resultPanel.append(
        el(
          "div",
          "warning-banner",
          "Warning: the rewrite is not semantically equivalent to the input " +
            "(non-detoxifiable case).",
        ),
      );
    }
    if (result.explanation) {
      this.resultPanel.append(
        el("h2", undefined, "Explanation"),
        el("p", "explanation-text", result.explanation),
      );
    }
    this.resultPanel.append(
      el("h2", undefined, "Rewrite"),
      el("p", "rewrite-text", result.rewrite),
    );
    if (result.refusal_detected) {
      this.resultPanel.append(el("p", "refusal-note", "The model refused to rewrite."));
    }

    const editLabel = el("label", undefined, "Edited rewrite (optional): ");
    const edit = el("textarea", "edited-rewrite");
    edit.value = result.rewrite;
    editLabel.append(edit);
    this.resultPanel.append(editLabel);
  }

  private renderRatingPanel(): void {
    this.ratingPanel.replaceChildren();
    if (!this.session.current) return;

    const toggle = el("div", "branch-toggle");
    for (const branch of ["detoxifiable", "non_detoxifiable"] as Detoxifiability[]) {
      const label = el("label", undefined, branch.replace("_", "-"));
      const radio = el("input");
      radio.type = "radio";
      radio.name = "detoxifiability";
      radio.value = branch;
      radio.checked = this.session.detoxifiability === branch;
      radio.addEventListener("change", () => {
        this.session.setDetoxifiability(branch);
        this.renderRatingPanel();
      });
      label.prepend(radio);
      toggle.append(label);
    }
    this.ratingPanel.append(el("h2", undefined, "Rate the rewrite"), toggle);

    // Only the ratings legal for the current branch ever get buttons.
    const buttons = el("div", "rating-buttons");
    for (const rating of this.session.allowed()) {
      const button = el("button", "rating-button", rating);
      button.type = "button";
      button.dataset.rating = rating;
      button.title = this.ratingDescription(rating);
      button.addEventListener("click", () => void this.submitRating(rating));
      buttons.append(button);
    }
    this.ratingPanel.append(buttons);

    if (this.session.hasExplanation()) {
      this.ratingPanel.append(this.buildExplanationRatings());
    }
    this.ratingPanel.append(el("p", "rating-error"));
  }

  private ratingDescription(rating: Rating): string {
    if (!this.schema) return "";
    if (rating === "N" || rating === "T") {
      return this.schema.non_detoxifiable[rating] ?? "";
    }
    return this.schema.detoxifiable[rating as DetoxifiableRating] ?? "";
  }

  private buildExplanationRatings(): HTMLElement {
    const block = el("fieldset", "explanation-ratings");
    block.append(el("legend", undefined, "Rate the explanation"));
    for (const metric of EXPLANATION_METRICS) {
      const label = el("label", undefined, `${metric}: `);
      const select = el("select");
      select.dataset.metric = metric;
      for (const grade of ["A", "B", "C", "D"]) {
        const option = el("option", undefined, grade);
        option.value = grade;
        option.title = this.schema?.explanation[metric]?.[grade as DetoxifiableRating] ?? "";
        select.append(option);
      }
      label.append(select);
      block.append(label);
    }
    return block;
  }

  async submitRating(rating: Rating): Promise<void> {
    const job = this.session.current;
    const errorLine = this.ratingPanel.querySelector<HTMLElement>(".rating-error");
    if (!job) return;
    if (!this.session.canRate(rating)) {
      // Branch rule enforced client-side; nothing is sent.
      if (errorLine) {
        errorLine.textContent =
          `Rating ${rating} is not allowed for ${this.session.detoxifiability} items.`;
      }
      return;
    }
    const review: ReviewRecord = {
      job_id: job.id,
      reviewer_id: this.session.reviewerId,
      detoxifiability: this.session.detoxifiability,
      rating,
    };
    if (this.session.hasExplanation()) {
      const ratings: Partial<ExplanationRatings> = {};
      for (const metric of EXPLANATION_METRICS) {
        const select = this.ratingPanel.querySelector<HTMLSelectElement>(
          `select[data-metric="${metric}"]`,
        );
        if (select) ratings[metric] = select.value as DetoxifiableRating;
      }
      review.explanation_ratings = ratings as ExplanationRatings;
    }
    const edit = this.resultPanel.querySelector<HTMLTextAreaElement>(".edited-rewrite");
    const result = job.result as DetoxResult | null;
    if (edit && result && edit.value.trim() && edit.value !== result.rewrite) {
      review.edited_rewrite = edit.value;
    }
    try {
      const stored = await this.client.postReview(review);
      if (errorLine) errorLine.textContent = "";
      this.setStatus(`Stored review ${stored.id ?? ""} (${stored.rating}).`);
      await this.refreshHistory();
    } catch (error) {
      // A 409 is surfaced inline rather than thrown at the reviewer.
      if (errorLine && error instanceof ApiError && error.status === 409) {
        errorLine.textContent = error.detail;
      } else {
        this.setStatus(error instanceof Error ? error.message : String(error));
      }
    }
  }

  async refreshHistory(): Promise<void> {
    const job = this.session.current;
    this.historyPanel.replaceChildren(el("h2", undefined, "History"));
    if (!job) return;
    const reviews = await this.client.getReviews(job.id);
    const list = el("ul", "history-list");
    for (const review of reviews) {
      list.append(
        el(
          "li",
          "history-item",
          `${review.created_at ?? ""} ${review.reviewer_id}: ` +
            `${review.detoxifiability} / ${review.rating}`,
        ),
      );
    }
    this.historyPanel.append(list);
  }
}
