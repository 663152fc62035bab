// Mirrors of the service's JSON contract. The service schema
// (docs/openapi.json and GET /schema/ratings) is the source of truth;
// nothing here is computed client-side.

export type DetoxMode = "vanilla" | "prompted" | "cot_expl";

export type ParaphraseVerdict = "paraphrase" | "non_paraphrase" | "unknown";

export interface DetoxResult {
  rewrite: string;
  explanation: string | null;
  paraphrase_verdict: ParaphraseVerdict;
  warning: boolean;
  refusal_detected: boolean;
  parse_degraded: boolean;
  provenance: Record<string, unknown>;
}

export interface Job {
  id: string;
  kind: string;
  state: "queued" | "running" | "done" | "failed";
  submitted_at: string;
  finished_at: string | null;
  payload: Record<string, unknown>;
  result: DetoxResult | null;
  error: string | null;
}

export type Detoxifiability = "detoxifiable" | "non_detoxifiable";

export type DetoxifiableRating = "A" | "B" | "C" | "D";
export type NonDetoxifiableRating = "N" | "T";
export type Rating = DetoxifiableRating | NonDetoxifiableRating;

export interface ExplanationRatings {
  relevance: DetoxifiableRating;
  comprehensiveness: DetoxifiableRating;
  convincing: DetoxifiableRating;
}

export interface ReviewRecord {
  id?: string;
  job_id: string;
  reviewer_id: string;
  detoxifiability: Detoxifiability;
  rating: Rating;
  explanation_ratings?: ExplanationRatings | null;
  edited_rewrite?: string | null;
  prior_review_id?: string | null;
  created_at?: string;
}

export interface RatingSchema {
  detoxifiable: Record<DetoxifiableRating, string>;
  non_detoxifiable: Record<NonDetoxifiableRating, string>;
  explanation: Record<keyof ExplanationRatings, Record<DetoxifiableRating, string>>;
}
