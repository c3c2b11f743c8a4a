/** Orchestrates API calls and state transitions; rendering is a callback. */

import { Api, ApiError, ConflictError } from "./api.js";
import { AppState, Filters, initialState } from "./state.js";
import type { QueueItem } from "./types.js";

export class Console {
  state: AppState = initialState();

  constructor(
    private api: Api,
    private render: (state: AppState) => void = () => {},
  ) {}

  private paint(): void {
    this.render(this.state);
  }

  async refreshQueue(): Promise<void> {
    try {
      // fetch both slices so resolved items stay inspectable offline
      const items = await this.api.queue();
      this.state.items = items;
      this.state.stale = false;
      this.state.lastSync = new Date().toISOString();
    } catch {
      this.state.stale = true;
    }
    this.paint();
  }

  async refreshReport(from?: string, to?: string): Promise<void> {
    try {
      this.state.report = await this.api.report(from, to);
      this.state.stale = false;
    } catch {
      this.state.stale = true;
    }
    this.paint();
  }

  setFilters(patch: Partial<Filters>): void {
    this.state.filters = { ...this.state.filters, ...patch };
    this.paint();
  }

  async select(recordId: string): Promise<void> {
    this.state.selected = recordId;
    const item = this.state.items.find((i) => i.record_id === recordId);
    this.state.relevance = null;
    this.paint();
    if (item) {
      try {
        this.state.relevance = await this.api.relevance(item.record.example_id);
      } catch {
        this.state.relevance = null;
      }
      this.paint();
    }
  }

  private replaceItem(updated: QueueItem): void {
    this.state.items = this.state.items.map((item) =>
      item.record_id === updated.record_id ? updated : item);
  }

  async submitVerdict(recordId: string, label: number, note = "",
                      analyst = ""): Promise<void> {
    const original = this.state.items.find((i) => i.record_id === recordId);
    if (!original) return;
    // optimistic: the row leaves the pending view immediately
    this.replaceItem({
      ...original,
      status: "resolved",
      verdict: { label, note, analyst, resolved_at: new Date().toISOString() },
    });
    this.paint();
    try {
      const serverItem = await this.api.submitVerdict(recordId, label, note, analyst);
      this.replaceItem(serverItem); // reconcile with the server's view
      this.state.notices = this.state.notices.filter((n) => n.kind !== "conflict");
    } catch (err) {
      if (err instanceof ConflictError) {
        // someone else resolved it; re-sync the row and say so
        this.state.notices.push({
          kind: "conflict",
          text: `verdict for ${recordId} conflicted; row refreshed`,
        });
        try {
          this.state.items = await this.api.queue();
        } catch {
          this.state.stale = true;
        }
      } else if (err instanceof ApiError) {
        this.replaceItem(original);
        this.state.notices.push({ kind: "error", text: `verdict failed: ${err.message}` });
      } else {
        // network-level failure: keep the optimistic row, queue a retry
        this.state.pendingSubmits.push({ recordId, label, note, analyst });
      }
    }
    this.paint();
  }

  /** Re-attempt verdicts queued while offline. */
  async retryPending(): Promise<void> {
    const waiting = this.state.pendingSubmits;
    this.state.pendingSubmits = [];
    for (const submit of waiting) {
      await this.submitVerdict(submit.recordId, submit.label, submit.note, submit.analyst);
    }
  }
}
