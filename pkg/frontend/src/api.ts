/** Typed client for the recommendation service's JSON API.
 *
 * Response shapes mirror the server payloads field for field; nothing is
 * reshaped or re-ranked on the way through.
 */

export interface ItemPayload {
  item_id: string;
  title: string;
  description: string;
  semantic_category: string;
  image_ref: string | null;
}

export interface ItemPage {
  items: ItemPayload[];
  page: number;
  page_size: number;
  total: number;
}

export interface RecommendRequest {
  query_item_id: string | null;
  free_text: string | null;
  style: string | null;
  occasion: string | null;
  k: number;
}

export interface Recommendation {
  item_id: string;
  title: string;
  score: number;
  rationale: string;
}

/** Path label to doc ids, already in fused-score order. */
export type Provenance = Record<string, string[]>;

export interface RecommendResponse {
  recommendations: Recommendation[];
  provenance: Provenance;
  model: string;
  fallback: boolean;
  latency_ms: number;
  warnings: string[];
}

export interface Health {
  status: string;
  index_size: number;
  backend: string;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(detail);
    this.name = "ApiError";
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export interface ListItemsParams {
  query?: string;
  category?: string;
  page?: number;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  listItems(params: ListItemsParams = {}): Promise<ItemPage> {
    const qs = new URLSearchParams();
    if (params.query) qs.set("query", params.query);
    if (params.category) qs.set("category", params.category);
    if (params.page !== undefined) qs.set("page", String(params.page));
    const suffix = qs.size > 0 ? `?${qs.toString()}` : "";
    return this.request<ItemPage>(`/api/items${suffix}`);
  }

  getItem(itemId: string): Promise<ItemPayload> {
    return this.request<ItemPayload>(`/api/items/${encodeURIComponent(itemId)}`);
  }

  health(): Promise<Health> {
    return this.request<Health>("/api/health");
  }

  recommend(body: RecommendRequest, signal?: AbortSignal): Promise<RecommendResponse> {
    return this.request<RecommendResponse>("/api/recommend", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
      signal,
    });
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    let payload: unknown = null;
    try {
      payload = await response.json();
    } catch {
      payload = null;
    }
    if (!response.ok) {
      const detail =
        payload !== null &&
        typeof payload === "object" &&
        typeof (payload as { detail?: unknown }).detail === "string"
          ? (payload as { detail: string }).detail
          : `HTTP ${response.status}`;
      throw new ApiError(response.status, detail);
    }
    return payload as T;
  }
}
