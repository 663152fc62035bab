// Thin fetch client over the detoxification service HTTP contract.

import type { DetoxMode, Job, RatingSchema, ReviewRecord } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, public detail: string) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  let detail = response.statusText;
  try {
    const body = await response.json();
    if (body && body.detail) {
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(response.status, detail);
}

export class ServiceClient {
  constructor(private baseUrl: string, private fetchFn: typeof fetch = fetch) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      headers: { "Content-Type": "application/json" },
      ...init,
    });
    if (!response.ok) {
      throw await parseError(response);
    }
    return (await response.json()) as T;
  }

  detoxify(text: string, mode: DetoxMode): Promise<Job> {
    return this.request<Job>("/detoxify", {
      method: "POST",
      body: JSON.stringify({ text, mode }),
    });
  }

  getJob(id: string): Promise<Job> {
    return this.request<Job>(`/jobs/${encodeURIComponent(id)}`);
  }

  postReview(review: ReviewRecord): Promise<ReviewRecord> {
    return this.request<ReviewRecord>("/reviews", {
      method: "POST",
      body: JSON.stringify(review),
    });
  }

  getReviews(jobId: string): Promise<ReviewRecord[]> {
    return this.request<ReviewRecord[]>(`/reviews?job_id=${encodeURIComponent(jobId)}`);
  }

  ratingSchema(): Promise<RatingSchema> {
    return this.request<RatingSchema>("/schema/ratings");
  }
}
