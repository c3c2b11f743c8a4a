/** Pure HTML renderers: every view is a function of state (plus a clock).
 *
 * Report numbers are serialized with JSON.stringify so the dashboard shows
 * exactly what the API payload carries; nothing is recomputed client-side.
 */

import { AppState, ageLabel, selectedItem, visibleItems } from "./state.js";
import type { DefenseRecord, QueueItem, Relevance, ThreatReport } from "./types.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Canonical byte rendering of a payload value. */
export function raw(value: unknown): string {
  return escapeHtml(JSON.stringify(value) ?? "null");
}

function snippet(text: string, limit = 70): string {
  return text.length <= limit ? text : text.slice(0, limit - 1) + "…";
}

export function noticesHtml(state: AppState): string {
  const banners: string[] = [];
  if (state.stale) {
    banners.push(
      `<div class="banner banner-stale" data-role="stale">` +
      `API unreachable — retrying; showing stale data` +
      (state.lastSync ? ` (last sync ${escapeHtml(state.lastSync)})` : "") +
      `</div>`);
  }
  for (const notice of state.notices) {
    banners.push(
      `<div class="banner banner-${notice.kind}" data-role="notice-${notice.kind}">` +
      `${escapeHtml(notice.text)}</div>`);
  }
  if (state.pendingSubmits.length > 0) {
    banners.push(
      `<div class="banner banner-retry" data-role="queued-retry">` +
      `${state.pendingSubmits.length} verdict(s) queued for retry</div>`);
  }
  return banners.join("");
}

export function queueViewHtml(state: AppState, nowIso: string): string {
  const items = visibleItems(state);
  const options = ["pending", "resolved"]
    .map((s) => `<option value="${s}"${state.filters.status === s ? " selected" : ""}>${s}</option>`)
    .join("");
  const header =
    `<div class="queue-controls">` +
    `<select data-role="status-filter">${options}</select>` +
    `<input data-role="message-filter" placeholder="message filter" ` +
    `value="${escapeHtml(state.filters.message === "all" ? "" : state.filters.message)}">` +
    `</div>`;
  if (items.length === 0) {
    return header + `<div class="empty-state" data-role="empty-queue">No ${state.filters.status} items</div>`;
  }
  const rows = items
    .map((item) => queueRowHtml(item, nowIso, item.record_id === state.selected))
    .join("");
  return header +
    `<table class="queue" data-role="queue-table"><thead><tr>` +
    `<th>id</th><th>snippet</th><th>message</th><th>adv score</th><th>age</th>` +
    `</tr></thead><tbody>${rows}</tbody></table>`;
}

function queueRowHtml(item: QueueItem, nowIso: string, selected: boolean): string {
  const rec = item.record;
  return (
    `<tr class="queue-row${selected ? " selected" : ""}" data-role="queue-row" ` +
    `data-id="${escapeHtml(item.record_id)}" data-status="${item.status}">` +
    `<td class="mono">${escapeHtml(item.record_id)}</td>` +
    `<td>${escapeHtml(snippet(rec.text))}</td>` +
    `<td class="msg">${escapeHtml(rec.human_msg)}</td>` +
    `<td class="mono">${raw(rec.adv_pcs)}</td>` +
    `<td>${ageLabel(rec.created_at, nowIso)}</td>` +
    `</tr>`
  );
}

function heatSpan(token: string, weight: number): string {
  const alpha = Math.max(0, Math.min(1, weight));
  return (
    `<span class="token" data-role="heat-token" ` +
    `style="background: rgba(255, 99, 71, ${alpha.toFixed(3)})">` +
    `${escapeHtml(token)}</span>`
  );
}

export function relevanceHtml(relevance: Relevance): string {
  const words = relevance.tokens.slice(1); // CLS slot is not displayable text
  const scores = relevance.a_map.slice(1);
  const max = Math.max(...scores.map(Math.abs), 1e-12);
  const spans = words
    .map((tok, i) => heatSpan(tok, Math.abs(scores[i] ?? 0) / max))
    .join(" ");
  return `<div class="heat" data-role="relevance">${spans}</div>`;
}

function diffHtml(original: string, transformed: string): string {
  const a = original.split(" ");
  const b = transformed.split(" ");
  const cells = a.map((word, i) => {
    const after = b[i] ?? "";
    if (word === after) return `<span class="same">${escapeHtml(word)}</span>`;
    return (
      `<span class="changed" data-role="diff-changed">` +
      `<del>${escapeHtml(word)}</del>→<ins>${escapeHtml(after)}</ins></span>`
    );
  });
  return `<div class="diff" data-role="diff">${cells.join(" ")}</div>`;
}

function candidateRows(rec: DefenseRecord): string {
  return rec.p_cand
    .map((cand) => {
      const repl = rec.replacements[String(cand.position)];
      const applied = repl
        ? `${escapeHtml(repl.token)} (simi ${raw(repl.simi_score)}, freq ${raw(repl.freq_score)})`
        : "—";
      return (
        `<tr data-role="cand-row">` +
        `<td>${escapeHtml(cand.word)}</td>` +
        `<td class="mono">${cand.position}</td>` +
        `<td>${escapeHtml(cand.sources.join("+"))}</td>` +
        `<td class="mono">${raw(cand.attention_score)}</td>` +
        `<td class="mono">${raw(cand.mask_drop)}</td>` +
        `<td>${applied}</td>` +
        `</tr>`
      );
    })
    .join("");
}

export function detailViewHtml(state: AppState): string {
  const item = selectedItem(state);
  if (!item) {
    return `<div class="empty-state" data-role="empty-detail">Select a queue item</div>`;
  }
  const rec = item.record;
  const relevance = state.relevance && state.relevance.example_id === rec.example_id
    ? relevanceHtml(state.relevance)
    : `<div class="heat heat-missing">relevance unavailable</div>`;
  const verdictPart = item.status === "resolved" && item.verdict
    ? `<div class="resolved-box" data-role="resolved-verdict">Resolved: label ` +
      `${raw(item.verdict.label)} by ${escapeHtml(item.verdict.analyst || "?")}` +
      `${item.verdict.note ? " — " + escapeHtml(item.verdict.note) : ""}</div>`
    : verdictFormHtml(item.record_id);
  return (
    `<div class="detail" data-role="detail" data-id="${escapeHtml(item.record_id)}">` +
    `<h3>${escapeHtml(rec.example_id)}</h3>` +
    `<div class="msg-line">${escapeHtml(rec.human_msg)}</div>` +
    `<dl class="pcs">` +
    `<dt>prediction before</dt><dd class="mono">${raw(rec.y_pred)} (adv score ${raw(rec.adv_pcs)})</dd>` +
    `<dt>prediction after</dt><dd class="mono">${raw(rec.y_pred_final)} (confidence ${raw(rec.final_confidence)})</dd>` +
    `</dl>` +
    relevance +
    diffHtml(rec.text, rec.tf_text) +
    `<table class="cands"><thead><tr><th>word</th><th>pos</th><th>sources</th>` +
    `<th>attention</th><th>mask drop</th><th>applied substitution</th></tr></thead>` +
    `<tbody>${candidateRows(rec)}</tbody></table>` +
    verdictPart +
    `</div>`
  );
}

function verdictFormHtml(recordId: string): string {
  return (
    `<form class="verdict" data-role="verdict-form" data-id="${escapeHtml(recordId)}">` +
    `<label>label <input name="label" type="number" min="0" required></label>` +
    `<label>note <input name="note" type="text"></label>` +
    `<label>analyst <input name="analyst" type="text"></label>` +
    `<button type="submit">Resolve</button>` +
    `</form>`
  );
}

export function reportViewHtml(report: ThreatReport | null): string {
  if (report === null || report.total_records === 0) {
    return `<div class="empty-state" data-role="empty-report">No records in range</div>`;
  }
  const metric = (name: keyof ThreatReport["metrics"], label: string) => {
    const m = report.metrics[name];
    const value = m.undefined ? "n/a" : raw(m.value);
    return (
      `<div class="card" data-role="metric-${name}">` +
      `<div class="card-label">${label}</div>` +
      `<div class="card-value">${value}</div>` +
      `<div class="card-sub">${raw(m.numerator)}/${raw(m.denominator)}</div>` +
      `</div>`
    );
  };
  const bars = Object.entries(report.message_histogram)
    .map(([msg, count]) =>
      `<div class="bar-row" data-role="hist-bar" data-count="${raw(count)}">` +
      `<span class="bar-label">${escapeHtml(msg)}</span>` +
      `<span class="bar-count mono">${raw(count)}</span></div>`)
    .join("");
  const tops = (pairs: [string, number][], role: string) =>
    pairs
      .map(([word, count]) =>
        `<li data-role="${role}">${escapeHtml(word)} <span class="mono">${raw(count)}</span></li>`)
      .join("");
  return (
    `<div class="report" data-role="report">` +
    `<div class="cards">` +
    `<div class="card" data-role="total"><div class="card-label">records</div>` +
    `<div class="card-value">${raw(report.total_records)}</div></div>` +
    `<div class="card" data-role="detected"><div class="card-label">detected adversarial</div>` +
    `<div class="card-value">${raw(report.detected_adversarial)}</div></div>` +
    `<div class="card" data-role="queue-depth"><div class="card-label">pending queue</div>` +
    `<div class="card-value">${raw(report.pending_queue_depth)}</div></div>` +
    metric("acc_all", "overall accuracy") +
    metric("acc_tf", "transform accuracy") +
    metric("transform_error", "transform error") +
    metric("acc_human", "human-flagging accuracy") +
    metric("analyst_corrected_accuracy", "analyst-corrected accuracy") +
    `</div>` +
    `<h4>messages</h4><div class="hist" data-role="histogram">${bars}</div>` +
    `<h4>top flagged words</h4><ul>${tops(report.top_candidate_words, "top-word")}</ul>` +
    `<h4>top replacements</h4><ul>${tops(report.top_replacements, "top-replacement")}</ul>` +
    `</div>`
  );
}

export function appHtml(state: AppState, nowIso: string): string {
  return (
    noticesHtml(state) +
    `<div class="layout">` +
    `<section class="pane pane-queue">${queueViewHtml(state, nowIso)}</section>` +
    `<section class="pane pane-detail">${detailViewHtml(state)}</section>` +
    `<section class="pane pane-report">${reportViewHtml(state.report)}</section>` +
    `</div>`
  );
}
