/** In-memory stand-in for the recommendation service.
 *
 * Implements the documented /api endpoints over a small catalog with
 * hand-written embedding vectors, mirroring the server's observable
 * semantics: sorted ids, substring search, page slicing, query-item
 * exclusion, and score-descending recommendations.
 */

import { FetchLike, ItemPayload } from "../src/api.js";

export interface FixtureItem extends ItemPayload {
  vector: number[];
}

export const PAGE_SIZE = 3;

export const FIXTURE_ITEMS: FixtureItem[] = [
  {
    item_id: "belt-tan",
    title: "tan leather belt",
    description: "wide tan leather belt with brass buckle",
    semantic_category: "accessories",
    image_ref: null,
    vector: [0.2, 0.9, 0.1],
  },
  {
    item_id: "boots-tan",
    title: "tan leather boots",
    description: "ankle boots in tan leather",
    semantic_category: "shoes",
    image_ref: null,
    vector: [0.15, 0.95, 0.0],
  },
  {
    item_id: "cap-olive",
    title: "olive canvas cap",
    description: "olive canvas field cap",
    semantic_category: "accessories",
    image_ref: null,
    vector: [0.0, 0.2, 0.9],
  },
  {
    item_id: "gown-crimson",
    title: "crimson silk evening gown",
    description: "floor-length crimson silk gown",
    semantic_category: "dresses",
    image_ref: null,
    vector: [1.0, 0.1, 0.0],
  },
  {
    item_id: "parka-olive",
    title: "olive canvas parka",
    description: "hooded olive canvas parka",
    semantic_category: "outerwear",
    image_ref: null,
    vector: [0.05, 0.1, 0.95],
  },
  {
    item_id: "scarf-crimson",
    title: "crimson silk scarf",
    description: "crimson silk scarf with tassels",
    semantic_category: "accessories",
    image_ref: null,
    vector: [0.95, 0.05, 0.1],
  },
  {
    item_id: "tee-white",
    title: "white cotton tee",
    description: "plain white cotton tee",
    semantic_category: "tops",
    image_ref: null,
    vector: [0.5, 0.5, 0.5],
  },
];

export function cosine(a: number[], b: number[]): number {
  let dot = 0;
  let na = 0;
  let nb = 0;
  for (let i = 0; i < a.length; i++) {
    dot += (a[i] ?? 0) * (b[i] ?? 0);
    na += (a[i] ?? 0) ** 2;
    nb += (b[i] ?? 0) ** 2;
  }
  if (na === 0 || nb === 0) return 0;
  return dot / Math.sqrt(na * nb);
}

function json(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

function itemPayload(item: FixtureItem): ItemPayload {
  const { vector, ...payload } = item;
  void vector;
  return payload;
}

function listItems(url: URL): Response {
  const page = url.searchParams.has("page") ? Number(url.searchParams.get("page")) : 1;
  if (!Number.isInteger(page) || page < 1) {
    return json(400, { detail: "page must be >= 1" });
  }
  const needle = (url.searchParams.get("query") ?? "").trim().toLowerCase();
  const category = url.searchParams.get("category") ?? "";
  const matches = [...FIXTURE_ITEMS]
    .sort((a, b) => (a.item_id < b.item_id ? -1 : 1))
    .filter((item) => {
      if (category && item.semantic_category !== category) return false;
      if (needle) {
        const haystack = `${item.item_id} ${item.title} ${item.description}`.toLowerCase();
        if (!haystack.includes(needle)) return false;
      }
      return true;
    });
  const start = (page - 1) * PAGE_SIZE;
  return json(200, {
    items: matches.slice(start, start + PAGE_SIZE).map(itemPayload),
    page,
    page_size: PAGE_SIZE,
    total: matches.length,
  });
}

interface RecommendBodyWire {
  query_item_id?: string | null;
  free_text?: string | null;
  style?: string | null;
  occasion?: string | null;
  k?: number;
}

function recommend(body: RecommendBodyWire): Response {
  const k = body.k ?? 10;
  if (!Number.isInteger(k) || k < 1 || k > 50) {
    return json(400, { detail: "body.k: must be between 1 and 50" });
  }
  if (!body.query_item_id && !body.free_text) {
    return json(400, { detail: "need query_item_id or free_text" });
  }
  let queryVector: number[];
  if (body.query_item_id) {
    const queryItem = FIXTURE_ITEMS.find((i) => i.item_id === body.query_item_id);
    if (queryItem === undefined) {
      return json(404, { detail: `unknown item '${body.query_item_id}'` });
    }
    queryVector = queryItem.vector;
  } else {
    queryVector = [0.4, 0.4, 0.4];
  }
  const scored = FIXTURE_ITEMS.filter((i) => i.item_id !== body.query_item_id)
    .map((item) => ({ item, score: cosine(item.vector, queryVector) }))
    .sort((a, b) => b.score - a.score || (a.item.item_id < b.item.item_id ? -1 : 1));
  const top = scored.slice(0, k);
  const provenance: Record<string, string[]> = {
    direct: top.map((s) => s.item.item_id),
    style_occasion: body.style || body.occasion ? top.slice(0, 2).map((s) => s.item.item_id) : [],
  };
  return json(200, {
    recommendations: top.map((s) => ({
      item_id: s.item.item_id,
      title: s.item.title,
      score: s.score,
      rationale: `echoes the ${body.style ?? "query"} line`,
    })),
    provenance,
    model: "fixture-model",
    fallback: false,
    latency_ms: 1.0,
    warnings: [],
  });
}

/** Fetch-compatible entry point for the fixture service. */
export function fixtureFetch(): FetchLike {
  return async (rawUrl, init) => {
    const url = new URL(rawUrl, "http://fixture.test");
    if (url.pathname === "/api/items") {
      return listItems(url);
    }
    const itemMatch = url.pathname.match(/^\/api\/items\/([^/]+)$/);
    if (itemMatch !== null) {
      const itemId = decodeURIComponent(itemMatch[1] ?? "");
      const item = FIXTURE_ITEMS.find((i) => i.item_id === itemId);
      if (item === undefined) return json(404, { detail: `unknown item '${itemId}'` });
      return json(200, itemPayload(item));
    }
    if (url.pathname === "/api/health") {
      return json(200, { status: "ok", index_size: FIXTURE_ITEMS.length, backend: "fixture" });
    }
    if (url.pathname === "/api/recommend" && init?.method === "POST") {
      return recommend(JSON.parse(String(init.body)) as RecommendBodyWire);
    }
    return json(404, { detail: `no route for ${url.pathname}` });
  };
}
