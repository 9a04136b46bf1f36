/** Pure HTML renderers for the two views. Keeping these as string
 * functions makes every displayed number assertable in tests without a
 * browser. */

import type { SessionViewState } from "./session.js";
import type { ReviewController } from "./review.js";
import { CATEGORIES } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Wrap matched query terms in <mark> so reviewers see why a tweet hit. */
export function highlightTerms(text: string, terms: string[]): string {
  const wanted = new Set(terms.map((t) => t.toLowerCase()));
  return text
    .split(/(\s+)/)
    .map((chunk) => {
      const bare = chunk.toLowerCase().replace(/^[^a-z0-9]+|[^a-z0-9]+$/g, "");
      const safe = escapeHtml(chunk);
      return bare && wanted.has(bare) ? `<mark>${safe}</mark>` : safe;
    })
    .join("");
}

export function renderSession(
  state: SessionViewState,
  canFinalize: boolean,
  finalizeBlocker: string | null,
): string {
  const parts: string[] = ['<section class="session">'];
  if (state.banner) {
    parts.push(`<div class="banner" role="alert">${escapeHtml(state.banner)}</div>`);
  }
  if (state.claim) {
    parts.push(`<p class="claim">${escapeHtml(state.claim.text)}</p>`);
  }
  const session = state.session;
  if (session) {
    const chips = session.current_terms
      .map(
        (term) =>
          `<span class="chip">${escapeHtml(term)}` +
          `<button class="remove" data-term="${escapeHtml(term)}"` +
          `${session.status === "open" ? "" : " disabled"}>x</button></span>`,
      )
      .join("");
    parts.push(`<div class="chips">${chips}</div>`);
    parts.push(`<div class="hits">hits: <strong>${session.hit_count}</strong></div>`);
    const disabled = canFinalize ? "" : " disabled";
    const tooltip = finalizeBlocker ? ` title="${escapeHtml(finalizeBlocker)}"` : "";
    parts.push(`<button id="finalize"${disabled}${tooltip}>finalize</button>`);
    const timeline = session.history
      .map(
        (event) =>
          `<li>${event.action} ${escapeHtml(event.term)} &rarr; ${event.resulting_hit_count}</li>`,
      )
      .join("");
    parts.push(`<ol class="timeline">${timeline}</ol>`);
  }
  if (state.sample) {
    const items = state.sample.tweets
      .map((t) => `<li data-id="${escapeHtml(t.id)}">${escapeHtml(t.text)}</li>`)
      .join("");
    parts.push(`<ul class="sample">${items}</ul>`);
  }
  if (state.finalized) {
    parts.push(
      `<div class="done">finalized: ${state.finalized.positiveTerms
        .map(escapeHtml)
        .join(", ")} (${state.finalized.instances} instances)</div>`,
    );
  }
  parts.push("</section>");
  return parts.join("\n");
}

export function renderReview(controller: ReviewController): string {
  const parts: string[] = ['<section class="review">'];
  if (controller.banner) {
    parts.push(`<div class="banner" role="alert">${escapeHtml(controller.banner)}</div>`);
  }
  parts.push(
    `<div class="counters">decisions: ${controller.decisions} | ` +
      `false positives: <span id="fp-counter">${controller.falsePositives}</span> | ` +
      `remaining: ${controller.queue.length - controller.index}</div>`,
  );
  const candidate = controller.current;
  if (candidate) {
    parts.push(
      `<blockquote class="candidate">${highlightTerms(
        candidateText(candidate),
        candidate.matched_terms,
      )}</blockquote>`,
    );
    const boxes = CATEGORIES.map((category, i) => {
      const checked = controller.checked.has(category) ? " checked" : "";
      return (
        `<label><input type="checkbox" data-category="${category}"${checked}>` +
        `${i + 1}. ${category}</label>`
      );
    }).join("");
    parts.push(`<fieldset class="categories">${boxes}</fieldset>`);
    parts.push(
      `<button id="approve"${controller.canApprove ? "" : " disabled"}>approve label</button>` +
        `<button id="dismiss"${controller.canDismiss ? "" : " disabled"}>dismiss</button>`,
    );
  } else {
    parts.push('<p class="empty">queue empty</p>');
  }
  if (controller.report) {
    const rows = controller.report.claims
      .map(
        (row) =>
          `<tr><td>${escapeHtml(row.claim_id)}</td><td>${row.flagged}</td>` +
          `<td>${row.labeled}</td><td>${row.dismissed}</td><td>${row.moderated}</td></tr>`,
      )
      .join("");
    parts.push(
      '<table class="coverage"><thead><tr><th>claim</th><th>flagged</th>' +
        "<th>labeled</th><th>dismissed</th><th>moderated</th></tr></thead>" +
        `<tbody>${rows}</tbody></table>`,
    );
  }
  parts.push("</section>");
  return parts.join("\n");
}

/** Candidates carry only ids over the wire; the tweet body is shown when
 * the service includes it in the sample panel, otherwise the id. */
function candidateText(candidate: { tweet_id: string; text?: string }): string {
  return candidate.text ?? candidate.tweet_id;
}
