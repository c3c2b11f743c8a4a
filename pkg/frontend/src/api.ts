/** Thin typed client over the defense service's HTTP API. */

import type { QueueItem, QueueStatus, Relevance, ThreatReport } from "./types.js";

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

/** 409 from a verdict on a missing or already-resolved item. */
export class ConflictError extends ApiError {
  constructor(message: string) {
    super(409, message);
  }
}

export interface Api {
  queue(status?: QueueStatus): Promise<QueueItem[]>;
  submitVerdict(id: string, label: number, note: string, analyst: string): Promise<QueueItem>;
  report(from?: string, to?: string): Promise<ThreatReport>;
  relevance(exampleId: string): Promise<Relevance>;
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class HttpApi implements Api {
  constructor(
    private baseUrl: string = "",
    private fetchFn: FetchLike = (url, init) => globalThis.fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const resp = await this.fetchFn(this.baseUrl + path, init);
    if (resp.status === 409) {
      throw new ConflictError(await resp.text());
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, await resp.text());
    }
    return (await resp.json()) as T;
  }

  queue(status?: QueueStatus): Promise<QueueItem[]> {
    const suffix = status ? `?status=${status}` : "";
    return this.request<QueueItem[]>(`/v1/queue${suffix}`);
  }

  submitVerdict(id: string, label: number, note: string, analyst: string): Promise<QueueItem> {
    return this.request<QueueItem>(`/v1/queue/${encodeURIComponent(id)}/verdict`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ label, note, analyst }),
    });
  }

  report(from?: string, to?: string): Promise<ThreatReport> {
    const params = new URLSearchParams();
    if (from) params.set("from", from);
    if (to) params.set("to", to);
    const qs = params.toString();
    return this.request<ThreatReport>(`/v1/report${qs ? "?" + qs : ""}`);
  }

  relevance(exampleId: string): Promise<Relevance> {
    return this.request<Relevance>(`/v1/relevance/${encodeURIComponent(exampleId)}`);
  }
}
