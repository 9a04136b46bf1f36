/** Candidate review workflow.
 *
 * Walks the pending queue; each decision posts its categories and
 * verdict, then advances. The false-positive counter and coverage widget
 * are refreshed from /reports/coverage after every decision, never
 * tallied locally. Double submission is guarded client-side.
 */

import type { ApiClient } from "./api.js";
import type { Candidate, Category, CoverageReport, Decision } from "./types.js";
import { CATEGORIES } from "./types.js";

export class ReviewController {
  queue: Candidate[] = [];
  index = 0;
  checked = new Set<Category>();
  banner: string | null = null;
  report: CoverageReport | null = null;
  private submitting = false;

  constructor(private readonly api: ApiClient) {}

  get current(): Candidate | null {
    return this.index < this.queue.length ? this.queue[this.index] : null;
  }

  get canApprove(): boolean {
    return this.current !== null && this.checked.size >= 1 && !this.submitting;
  }

  get canDismiss(): boolean {
    return this.current !== null && !this.submitting;
  }

  /** Service-sourced count of irrelevant-only labels. */
  get falsePositives(): number {
    return this.report ? this.report.false_positives : 0;
  }

  get decisions(): number {
    return this.report ? this.report.decisions : 0;
  }

  async load(claimId?: string): Promise<void> {
    await this.guard(async () => {
      this.queue = await this.api.listCandidates(claimId, "pending");
      this.index = 0;
      this.checked.clear();
      this.report = await this.api.coverage();
    });
  }

  toggleCategory(category: Category): void {
    if (this.checked.has(category)) {
      this.checked.delete(category);
    } else {
      this.checked.add(category);
    }
  }

  async approve(): Promise<void> {
    if (!this.canApprove) return;
    await this.submit("approve_label", [...this.checked].sort());
  }

  async dismiss(): Promise<void> {
    if (!this.canDismiss) return;
    await this.submit("dismiss", []);
  }

  private async submit(decision: Decision, categories: string[]): Promise<void> {
    const candidate = this.current;
    if (!candidate || this.submitting) return;
    this.submitting = true;
    try {
      await this.guard(async () => {
        const id = `${candidate.claim_id}:${candidate.tweet_id}`;
        await this.api.decide(id, categories, decision);
        this.index += 1;
        this.checked.clear();
        this.report = await this.api.coverage();
      });
    } finally {
      this.submitting = false;
    }
  }

  /** Keyboard shortcuts: 1..7 toggle categories, a approve, d dismiss,
   * s skip. Returns true when the key was handled. */
  async handleKey(key: string): Promise<boolean> {
    const digit = Number.parseInt(key, 10);
    if (digit >= 1 && digit <= CATEGORIES.length) {
      this.toggleCategory(CATEGORIES[digit - 1]);
      return true;
    }
    if (key === "a") {
      await this.approve();
      return true;
    }
    if (key === "d") {
      await this.dismiss();
      return true;
    }
    if (key === "s") {
      this.index += 1;
      this.checked.clear();
      return true;
    }
    return false;
  }

  private async guard(operation: () => Promise<void>): Promise<void> {
    try {
      this.banner = null;
      await operation();
    } catch (error) {
      this.banner = error instanceof Error ? error.message : String(error);
    }
  }
}
