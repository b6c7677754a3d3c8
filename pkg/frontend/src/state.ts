/** UI state and the recommend request lifecycle.
 *
 * One recommend request is in flight at a time. Each submit bumps a
 * sequence number and aborts the previous request; a completion whose
 * sequence is no longer the latest is discarded, so an out-of-order
 * arrival can never overwrite a newer result.
 */

import { ApiClient, RecommendRequest, RecommendResponse } from "./api.js";

export const STYLE_PRESETS = ["casual", "formal", "sport"] as const;
export const OCCASION_PRESETS = ["brunch", "office", "evening"] as const;

export const K_MIN = 1;
export const K_MAX = 50;

export interface UiState {
  selectedItemId: string | null;
  freeText: string;
  style: string;
  occasion: string;
  k: number;
  lastResponse: RecommendResponse | null;
  inFlight: boolean;
  error: string | null;
}

export function initialState(): UiState {
  return {
    selectedItemId: null,
    freeText: "",
    style: "",
    occasion: "",
    k: 10,
    lastResponse: null,
    inFlight: false,
    error: null,
  };
}

function isAbort(err: unknown): boolean {
  return err instanceof Error && err.name === "AbortError";
}

export function canSubmit(state: UiState): boolean {
  if (state.inFlight) return false;
  return state.selectedItemId !== null || state.freeText.trim() !== "";
}

export type Listener = (state: UiState) => void;

export class RecommendController {
  readonly state: UiState = initialState();

  private seq = 0;
  private aborter: AbortController | null = null;
  private listeners: Listener[] = [];

  constructor(private readonly client: ApiClient) {}

  subscribe(listener: Listener): () => void {
    this.listeners.push(listener);
    return () => {
      this.listeners = this.listeners.filter((l) => l !== listener);
    };
  }

  private emit(): void {
    for (const listener of this.listeners) listener(this.state);
  }

  selectItem(itemId: string | null): void {
    this.state.selectedItemId = itemId;
    this.emit();
  }

  setFreeText(text: string): void {
    this.state.freeText = text;
    this.emit();
  }

  setStyle(style: string): void {
    this.state.style = style;
    this.emit();
  }

  setOccasion(occasion: string): void {
    this.state.occasion = occasion;
    this.emit();
  }

  setK(k: number): void {
    this.state.k = Math.min(K_MAX, Math.max(K_MIN, Math.round(k) || K_MIN));
    this.emit();
  }

  requestBody(): RecommendRequest | null {
    const freeText = this.state.freeText.trim();
    if (this.state.selectedItemId === null && freeText === "") return null;
    return {
      query_item_id: this.state.selectedItemId,
      free_text: freeText === "" ? null : freeText,
      style: this.state.style.trim() === "" ? null : this.state.style.trim(),
      occasion: this.state.occasion.trim() === "" ? null : this.state.occasion.trim(),
      k: this.state.k,
    };
  }

  /** Issue the recommend request for the current state.
   *
   * Any earlier request is aborted first, and its late completion (abort
   * failing or a response already on the wire) is dropped by the sequence
   * check rather than shown.
   */
  async submit(): Promise<void> {
    const body = this.requestBody();
    if (body === null) {
      this.state.error = "pick an item or describe one first";
      this.emit();
      return;
    }
    this.aborter?.abort();
    this.aborter = new AbortController();
    const seq = ++this.seq;
    this.state.inFlight = true;
    this.state.error = null;
    this.emit();
    try {
      const response = await this.client.recommend(body, this.aborter.signal);
      if (seq !== this.seq) return;
      this.state.lastResponse = response;
      this.state.inFlight = false;
    } catch (err) {
      if (seq !== this.seq || isAbort(err)) return;
      this.state.inFlight = false;
      this.state.error = err instanceof Error ? err.message : String(err);
    }
    this.emit();
  }

  /** Re-issue the request after an error banner. */
  retry(): Promise<void> {
    return this.submit();
  }
}
