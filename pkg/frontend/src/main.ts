/** DOM bootstrap: wires controllers to the static page in index.html. */

import { ApiClient, ItemPage } from "./api.js";
import { RecommendController } from "./state.js";
import {
  renderErrorBanner,
  renderItemCards,
  renderPager,
  renderPresetChips,
  renderRecommendations,
  renderSubmitButton,
} from "./render.js";

const client = new ApiClient("");
const controller = new RecommendController(client);

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node;
}

let currentPage: ItemPage | null = null;
let browseQuery = "";
let browseCategory = "";

async function loadItems(page: number): Promise<void> {
  try {
    currentPage = await client.listItems({
      query: browseQuery,
      category: browseCategory,
      page,
    });
    el("browse-error").textContent = "";
  } catch (err) {
    currentPage = null;
    el("browse-error").textContent = err instanceof Error ? err.message : String(err);
  }
  paintBrowse();
}

function paintBrowse(): void {
  if (currentPage === null) {
    el("item-grid").innerHTML = "";
    el("pager").innerHTML = "";
    return;
  }
  el("item-grid").innerHTML = renderItemCards(currentPage, controller.state.selectedItemId);
  el("pager").innerHTML = renderPager(currentPage);
}

function paintRecommend(): void {
  el("submit-slot").innerHTML = renderSubmitButton(controller.state);
  el("banner-slot").innerHTML = renderErrorBanner(controller.state.error);
  el("recommendations").innerHTML = renderRecommendations(controller.state.lastResponse);
  paintBrowse();
}

controller.subscribe(paintRecommend);

el("presets").innerHTML = renderPresetChips();

el("search-form").addEventListener("submit", (event) => {
  event.preventDefault();
  browseQuery = (el("search-input") as HTMLInputElement).value;
  browseCategory = (el("category-input") as HTMLInputElement).value;
  void loadItems(1);
});

el("item-grid").addEventListener("click", (event) => {
  const card = (event.target as HTMLElement).closest("[data-item-id]");
  if (card === null) return;
  controller.selectItem(card.getAttribute("data-item-id"));
});

el("pager").addEventListener("click", (event) => {
  const button = (event.target as HTMLElement).closest("button[data-page]");
  if (button === null || button.hasAttribute("disabled")) return;
  void loadItems(Number(button.getAttribute("data-page")));
});

el("presets").addEventListener("click", (event) => {
  const chip = event.target as HTMLElement;
  const style = chip.getAttribute("data-preset-style");
  const occasion = chip.getAttribute("data-preset-occasion");
  if (style !== null) {
    (el("style-input") as HTMLInputElement).value = style;
    controller.setStyle(style);
  }
  if (occasion !== null) {
    (el("occasion-input") as HTMLInputElement).value = occasion;
    controller.setOccasion(occasion);
  }
});

for (const [id, setter] of [
  ["free-text-input", (v: string) => controller.setFreeText(v)],
  ["style-input", (v: string) => controller.setStyle(v)],
  ["occasion-input", (v: string) => controller.setOccasion(v)],
] as const) {
  el(id).addEventListener("input", (event) => {
    setter((event.target as HTMLInputElement).value);
  });
}

el("k-input").addEventListener("change", (event) => {
  controller.setK(Number((event.target as HTMLInputElement).value));
});

el("recommend-form").addEventListener("submit", (event) => {
  event.preventDefault();
  void controller.submit();
});

el("banner-slot").addEventListener("click", (event) => {
  const button = (event.target as HTMLElement).closest('[data-action="retry"]');
  if (button !== null) void controller.retry();
});

paintRecommend();
void loadItems(1);
void client.health().then(
  (health) => {
    el("health").textContent =
      `${health.status}: ${health.index_size} docs indexed, ${health.backend} backend`;
  },
  () => {
    el("health").textContent = "service unreachable";
  },
);
