/** Typed client for the moderation service. The console never computes
 * relevance or counts itself; everything displayed comes back from these
 * calls. */

import type {
  Candidate,
  Claim,
  CoverageReport,
  Decision,
  FinalizeResponse,
  SampleResponse,
  SessionState,
} from "./types.js";

export interface ApiClient {
  getClaims(): Promise<Claim[]>;
  createSession(claimId: string, seedTerms?: string[]): Promise<SessionState>;
  getSession(sessionId: string): Promise<SessionState>;
  sample(sessionId: string, n?: number, seed?: number): Promise<SampleResponse>;
  edit(sessionId: string, action: "add" | "remove", term: string): Promise<SessionState>;
  finalize(sessionId: string): Promise<FinalizeResponse>;
  listCandidates(claimId?: string, status?: string): Promise<Candidate[]>;
  decide(candidateId: string, categories: string[], decision: Decision): Promise<Candidate>;
  coverage(): Promise<CoverageReport>;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    detail: string,
  ) {
    super(detail);
  }
}

/** fetch-based client; pass the base URL and bearer token from the login screen. */
export class HttpApiClient implements ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly token?: string,
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { "content-type": "application/json" };
    if (this.token) headers.authorization = `Bearer ${this.token}`;
    const response = await fetch(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const payload = (await response.json()) as { detail?: string };
        if (payload.detail) detail = String(payload.detail);
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  getClaims() {
    return this.request<Claim[]>("GET", "/claims");
  }

  createSession(claimId: string, seedTerms?: string[]) {
    return this.request<SessionState>("POST", "/sessions", {
      claim_id: claimId,
      seed_terms: seedTerms ?? null,
    });
  }

  getSession(sessionId: string) {
    return this.request<SessionState>("GET", `/sessions/${sessionId}`);
  }

  sample(sessionId: string, n = 20, seed = 0) {
    return this.request<SampleResponse>(
      "GET",
      `/sessions/${sessionId}/sample?n=${n}&seed=${seed}`,
    );
  }

  edit(sessionId: string, action: "add" | "remove", term: string) {
    return this.request<SessionState>("POST", `/sessions/${sessionId}/edits`, {
      action,
      term,
    });
  }

  finalize(sessionId: string) {
    return this.request<FinalizeResponse>("POST", `/sessions/${sessionId}/finalize`);
  }

  listCandidates(claimId?: string, status?: string) {
    const params = new URLSearchParams();
    if (claimId) params.set("claim_id", claimId);
    if (status) params.set("status", status);
    const query = params.toString();
    return this.request<Candidate[]>("GET", `/candidates${query ? "?" + query : ""}`);
  }

  decide(candidateId: string, categories: string[], decision: Decision) {
    return this.request<Candidate>("POST", `/candidates/${candidateId}/decision`, {
      categories,
      decision,
    });
  }

  coverage() {
    return this.request<CoverageReport>("GET", "/reports/coverage");
  }
}
