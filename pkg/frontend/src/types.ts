/** Wire types of the moderation service protocol. */

export interface Claim {
  claim_id: string;
  text: string;
  score: number;
  source_tweet_ids: string[];
}

export type HistoryAction = "seed" | "add" | "remove";

export interface HistoryEvent {
  action: HistoryAction;
  term: string;
  resulting_hit_count: number;
  sample_shown: string[];
}

export type SessionStatus = "open" | "finalized" | "abandoned";

export interface SessionState {
  session_id: string;
  claim_id: string;
  current_terms: string[];
  status: SessionStatus;
  hit_count: number;
  history: HistoryEvent[];
}

export interface SampleResponse {
  tweet_ids: string[];
  tweets: { id: string; text: string }[];
  hit_count: number;
}

export interface FinalizeResponse {
  claim_id: string;
  positive_terms: string[];
  negative_candidates: string[][];
  instances: number;
}

export type CandidateStatus = "pending" | "labeled" | "dismissed";

export interface Candidate {
  tweet_id: string;
  claim_id: string;
  matched_terms: string[];
  flagged_at: number;
  status: CandidateStatus;
  categories: string[];
  /** tweet body, attached by the service's candidate listing */
  text?: string;
}

export type Decision = "approve_label" | "dismiss";

export const CATEGORIES = [
  "amplifying",
  "reporting",
  "counter",
  "satire",
  "discussion",
  "inquiry",
  "irrelevant",
] as const;

export type Category = (typeof CATEGORIES)[number];

export interface CoverageRow {
  claim_id: string;
  flagged: number;
  pending: number;
  labeled: number;
  dismissed: number;
  moderated: number;
}

export interface CoverageReport {
  claims: CoverageRow[];
  categories: Record<string, number>;
  false_positives: number;
  decisions: number;
}
