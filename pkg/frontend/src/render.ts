/** Pure HTML renderers.
 *
 * Everything shown comes straight from response bodies: recommendation
 * cards keep the response order and provenance lists keep the server's
 * fused-score order. No re-ranking happens client side.
 */

import { ItemPage, Provenance, RecommendResponse } from "./api.js";
import { OCCASION_PRESETS, STYLE_PRESETS, UiState, canSubmit } from "./state.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;")
    .replace(/'/g, "&#39;");
}

export function renderItemCards(page: ItemPage, selectedItemId: string | null): string {
  if (page.items.length === 0) {
    return '<p class="empty">no items match</p>';
  }
  const cards = page.items.map((item) => {
    const selected = item.item_id === selectedItemId ? " selected" : "";
    return (
      `<button class="item-card${selected}" data-item-id="${escapeHtml(item.item_id)}">` +
      `<span class="item-title">${escapeHtml(item.title)}</span>` +
      `<span class="item-category">${escapeHtml(item.semantic_category)}</span>` +
      `</button>`
    );
  });
  return cards.join("");
}

export function renderPager(page: ItemPage): string {
  const lastPage = Math.max(1, Math.ceil(page.total / page.page_size));
  const prevDisabled = page.page <= 1 ? " disabled" : "";
  const nextDisabled = page.page >= lastPage ? " disabled" : "";
  return (
    `<button data-page="${page.page - 1}"${prevDisabled}>prev</button>` +
    `<span class="page-label">page ${page.page} of ${lastPage}</span>` +
    `<button data-page="${page.page + 1}"${nextDisabled}>next</button>`
  );
}

export function renderPresetChips(): string {
  const chip = (group: string, value: string) =>
    `<button class="chip" data-preset-${group}="${value}">${value}</button>`;
  return (
    `<span class="chips" data-chips="style">` +
    STYLE_PRESETS.map((p) => chip("style", p)).join("") +
    `</span>` +
    `<span class="chips" data-chips="occasion">` +
    OCCASION_PRESETS.map((p) => chip("occasion", p)).join("") +
    `</span>`
  );
}

export function renderSubmitButton(state: UiState): string {
  const disabled = canSubmit(state) ? "" : " disabled";
  const label = state.inFlight ? "recommending&#8230;" : "recommend";
  return `<button id="submit"${disabled}>${label}</button>`;
}

export function renderErrorBanner(error: string | null): string {
  if (error === null) return "";
  return (
    `<div class="banner error" role="alert">` +
    `<span>${escapeHtml(error)}</span>` +
    `<button data-action="retry">retry</button>` +
    `</div>`
  );
}

export function renderProvenance(provenance: Provenance): string {
  const groups = Object.entries(provenance).filter(([, docIds]) => docIds.length > 0);
  if (groups.length === 0) {
    return '<p class="empty">no context used</p>';
  }
  return groups
    .map(
      ([label, docIds]) =>
        `<section class="path-group" data-path="${escapeHtml(label)}">` +
        `<h4>${escapeHtml(label)}</h4>` +
        `<ol>` +
        docIds.map((docId) => `<li>${escapeHtml(docId)}</li>`).join("") +
        `</ol>` +
        `</section>`,
    )
    .join("");
}

export function renderRecommendations(response: RecommendResponse | null): string {
  if (response === null) {
    return '<p class="empty">no recommendations yet</p>';
  }
  if (response.recommendations.length === 0) {
    return '<p class="empty">nothing to recommend for this query</p>';
  }
  const fallbackNote = response.fallback
    ? '<p class="note">model unavailable, showing retrieval-only results</p>'
    : "";
  const warnings = response.warnings
    .map((w) => `<p class="note warning">${escapeHtml(w)}</p>`)
    .join("");
  const cards = response.recommendations.map(
    (rec, position) =>
      `<article class="rec-card" data-item-id="${escapeHtml(rec.item_id)}">` +
      `<span class="rank">${position + 1}</span>` +
      `<h3>${escapeHtml(rec.title)}</h3>` +
      `<span class="score">${rec.score.toFixed(4)}</span>` +
      (rec.rationale === "" ? "" : `<p class="rationale">${escapeHtml(rec.rationale)}</p>`) +
      `<details class="provenance"><summary>provenance</summary>` +
      renderProvenance(response.provenance) +
      `</details>` +
      `</article>`,
  );
  return fallbackNote + warnings + cards.join("");
}
