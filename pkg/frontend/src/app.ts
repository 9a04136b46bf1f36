/** Browser bootstrap: login panel, then session and review tabs.
 *
 * All state lives server-side; the only thing the page keeps is the base
 * URL and bearer token the annotator typed, so a reload resumes cleanly.
 */

import { HttpApiClient } from "./api.js";
import { SessionController } from "./session.js";
import { ReviewController } from "./review.js";
import { renderReview, renderSession } from "./render.js";
import type { Claim } from "./types.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export function boot(): void {
  const loginForm = el<HTMLFormElement>("login");
  loginForm.addEventListener("submit", (event) => {
    event.preventDefault();
    const baseUrl = el<HTMLInputElement>("base-url").value.replace(/\/$/, "");
    const token = el<HTMLInputElement>("token").value || undefined;
    start(new HttpApiClient(baseUrl, token)).catch((error) => {
      el("login-error").textContent = String(error);
    });
  });
}

async function start(api: HttpApiClient): Promise<void> {
  const claims = await api.getClaims();
  el("login-panel").hidden = true;
  el("main-panel").hidden = false;

  const sessions = new SessionController(api);
  const review = new ReviewController(api);
  await review.load();

  const claimSelect = el<HTMLSelectElement>("claim-select");
  claimSelect.innerHTML = claims
    .map((c) => `<option value="${c.claim_id}">${c.text.slice(0, 80)}</option>`)
    .join("");
  const byId = new Map<string, Claim>(claims.map((c) => [c.claim_id, c]));

  const redraw = () => {
    el("session-view").innerHTML = renderSession(
      sessions.state,
      sessions.canFinalize,
      sessions.finalizeBlocker,
    );
    el("review-view").innerHTML = renderReview(review);
    wire();
  };

  const wire = () => {
    document.querySelectorAll<HTMLButtonElement>(".chip .remove").forEach((button) => {
      button.onclick = () => sessions.removeTerm(button.dataset.term ?? "").then(redraw);
    });
    const finalize = document.getElementById("finalize") as HTMLButtonElement | null;
    if (finalize) finalize.onclick = () => sessions.finalize().then(redraw);
    document
      .querySelectorAll<HTMLInputElement>(".categories input")
      .forEach((box) => {
        box.onchange = () => {
          review.toggleCategory(box.dataset.category as never);
          redraw();
        };
      });
    const approve = document.getElementById("approve") as HTMLButtonElement | null;
    if (approve) approve.onclick = () => review.approve().then(redraw);
    const dismiss = document.getElementById("dismiss") as HTMLButtonElement | null;
    if (dismiss) dismiss.onclick = () => review.dismiss().then(redraw);
  };

  el<HTMLFormElement>("open-session").addEventListener("submit", (event) => {
    event.preventDefault();
    const claim = byId.get(claimSelect.value);
    if (!claim) return;
    const seedRaw = el<HTMLInputElement>("seed-terms").value.trim();
    const seed = seedRaw ? seedRaw.split(/\s+/) : undefined;
    sessions.start(claim, seed).then(redraw);
  });

  el<HTMLFormElement>("add-term").addEventListener("submit", (event) => {
    event.preventDefault();
    const input = el<HTMLInputElement>("new-term");
    const term = input.value.trim();
    input.value = "";
    if (term) sessions.addTerm(term).then(redraw);
  });

  document.addEventListener("keydown", (event) => {
    const target = event.target as HTMLElement;
    if (target.tagName === "INPUT" || target.tagName === "TEXTAREA") return;
    review.handleKey(event.key).then((handled) => {
      if (handled) redraw();
    });
  });

  redraw();
}

if (typeof document !== "undefined" && document.getElementById("login")) {
  boot();
}
