/** Keyword-refinement session workflow.
 *
 * The controller is a thin state machine over the service: every add or
 * remove round-trips through /edits, then refreshes the sample and hit
 * count from the response. No counts are computed locally; the rendered
 * hit count is always the latest value the service reported.
 */

import type { ApiClient } from "./api.js";
import type { Claim, SampleResponse, SessionState } from "./types.js";

export interface SessionViewState {
  claim: Claim | null;
  session: SessionState | null;
  sample: SampleResponse | null;
  banner: string | null;
  finalized: { positiveTerms: string[]; instances: number } | null;
}

const MIN_TERMS = 2;
const MAX_TERMS = 5;

export class SessionController {
  readonly state: SessionViewState = {
    claim: null,
    session: null,
    sample: null,
    banner: null,
    finalized: null,
  };

  constructor(
    private readonly api: ApiClient,
    private readonly sampleSize = 20,
  ) {}

  /** Latest service-reported hit count; null before a session exists. */
  get hitCount(): number | null {
    return this.state.session ? this.state.session.hit_count : null;
  }

  get canFinalize(): boolean {
    const session = this.state.session;
    return (
      !!session &&
      session.status === "open" &&
      session.current_terms.length >= MIN_TERMS &&
      session.current_terms.length <= MAX_TERMS
    );
  }

  /** Explains a disabled finalize control. */
  get finalizeBlocker(): string | null {
    const session = this.state.session;
    if (!session || session.status !== "open") return "no open session";
    const n = session.current_terms.length;
    if (n < MIN_TERMS) return `keyword sets need at least ${MIN_TERMS} terms`;
    if (n > MAX_TERMS) return `keyword sets allow at most ${MAX_TERMS} terms`;
    return null;
  }

  async start(claim: Claim, seedTerms?: string[]): Promise<void> {
    await this.guard(async () => {
      this.state.claim = claim;
      this.state.finalized = null;
      this.state.session = await this.api.createSession(claim.claim_id, seedTerms);
      await this.refreshSample();
    });
  }

  async addTerm(term: string): Promise<void> {
    await this.applyEdit("add", term);
  }

  async removeTerm(term: string): Promise<void> {
    await this.applyEdit("remove", term);
  }

  private async applyEdit(action: "add" | "remove", term: string): Promise<void> {
    const session = this.state.session;
    if (!session) return;
    await this.guard(async () => {
      this.state.session = await this.api.edit(session.session_id, action, term.trim());
      await this.refreshSample();
    });
  }

  async refreshSample(seed = 0): Promise<void> {
    const session = this.state.session;
    if (!session || session.status !== "open") return;
    const sample = await this.api.sample(session.session_id, this.sampleSize, seed);
    this.state.sample = sample;
    // the sample endpoint re-reports the count; keep the freshest value
    this.state.session = { ...session, hit_count: sample.hit_count };
  }

  async finalize(): Promise<void> {
    const session = this.state.session;
    if (!session || !this.canFinalize) return;
    await this.guard(async () => {
      const result = await this.api.finalize(session.session_id);
      this.state.finalized = {
        positiveTerms: result.positive_terms,
        instances: result.instances,
      };
      this.state.session = await this.api.getSession(session.session_id);
    });
  }

  /** Service failures surface as an inline banner; prior state survives. */
  private async guard(operation: () => Promise<void>): Promise<void> {
    try {
      this.state.banner = null;
      await operation();
    } catch (error) {
      this.state.banner = error instanceof Error ? error.message : String(error);
    }
  }
}
