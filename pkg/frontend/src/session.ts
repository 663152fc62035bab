// Review session state: one active item at a time, and the rating-branch
// rule enforced before anything reaches the network.

import type { Detoxifiability, DetoxResult, Job, Rating } from "./types.js";

export const DETOXIFIABLE_RATINGS: Rating[] = ["A", "B", "C", "D"];
export const NON_DETOXIFIABLE_RATINGS: Rating[] = ["N", "T"];

export function allowedRatings(branch: Detoxifiability): Rating[] {
  return branch === "detoxifiable" ? DETOXIFIABLE_RATINGS : NON_DETOXIFIABLE_RATINGS;
}

export class ReviewSession {
  reviewerId: string;
  current: Job | null = null;
  detoxifiability: Detoxifiability = "detoxifiable";
  private pending: string[] = [];

  constructor(reviewerId: string) {
    this.reviewerId = reviewerId;
  }

  get queue(): readonly string[] {
    return this.pending;
  }

  enqueue(jobId: string): void {
    this.pending.push(jobId);
  }

  /** Activate a finished job; the warning preselects the rating branch. */
  activate(job: Job): void {
    this.current = job;
    this.pending = this.pending.filter((id) => id !== job.id);
    const result = job.result as DetoxResult | null;
    this.detoxifiability = result && result.warning ? "non_detoxifiable" : "detoxifiable";
  }

  clear(): void {
    this.current = null;
  }

  setDetoxifiability(branch: Detoxifiability): void {
    this.detoxifiability = branch;
  }

  allowed(): Rating[] {
    return allowedRatings(this.detoxifiability);
  }

  canRate(rating: Rating): boolean {
    return this.current !== null && this.allowed().includes(rating);
  }

  hasExplanation(): boolean {
    const result = this.current?.result as DetoxResult | null | undefined;
    return Boolean(result && result.explanation);
  }
}
