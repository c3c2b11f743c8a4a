/** Console state and pure selectors; views are functions of this alone. */

import type { QueueItem, QueueStatus, Relevance, ThreatReport } from "./types.js";

export interface Filters {
  status: QueueStatus;
  message: string; // "all" or an exact human-intervention message
  from: string; // ISO lower bound on created_at, "" = open
  to: string;
}

export interface Notice {
  kind: "conflict" | "retry" | "error";
  text: string;
}

export interface PendingSubmit {
  recordId: string;
  label: number;
  note: string;
  analyst: string;
}

export interface AppState {
  items: QueueItem[];
  filters: Filters;
  selected: string | null;
  relevance: Relevance | null;
  report: ThreatReport | null;
  notices: Notice[];
  pendingSubmits: PendingSubmit[];
  stale: boolean; // last refresh failed; rendered data may be old
  lastSync: string | null;
}

export function initialState(): AppState {
  return {
    items: [],
    filters: { status: "pending", message: "all", from: "", to: "" },
    selected: null,
    relevance: null,
    report: null,
    notices: [],
    pendingSubmits: [],
    stale: false,
    lastSync: null,
  };
}

/** Items surviving the active filters, newest first. */
export function visibleItems(state: AppState): QueueItem[] {
  const { status, message, from, to } = state.filters;
  return state.items
    .filter((item) => item.status === status)
    .filter((item) => message === "all" || item.record.human_msg === message)
    .filter((item) => !from || item.record.created_at >= from)
    .filter((item) => !to || item.record.created_at <= to)
    .sort((a, b) => (a.record.created_at < b.record.created_at ? 1 : -1));
}

export function selectedItem(state: AppState): QueueItem | null {
  if (state.selected === null) return null;
  return state.items.find((item) => item.record_id === state.selected) ?? null;
}

/** Age like "3m" or "2h" relative to a supplied clock (keeps views pure). */
export function ageLabel(createdAt: string, nowIso: string): string {
  const ms = Date.parse(nowIso) - Date.parse(createdAt);
  if (!Number.isFinite(ms) || ms < 0) return "now";
  const minutes = Math.floor(ms / 60000);
  if (minutes < 1) return "now";
  if (minutes < 60) return `${minutes}m`;
  const hours = Math.floor(minutes / 60);
  if (hours < 48) return `${hours}h`;
  return `${Math.floor(hours / 24)}d`;
}
