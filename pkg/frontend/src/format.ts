/** Dashboard rendering helpers.
 *
 * Every number shown in the dashboard is the server's value verbatim
 * (String() of the JSON-decoded value) - the console never recomputes
 * precision, eta, or metrics.
 */

import type { IterationRecord } from "./api.js";

export function metricKeys(records: IterationRecord[]): string[] {
  if (records.length === 0) return [];
  return Object.keys(records[0].eval).sort();
}

export function historyColumns(records: IterationRecord[]): string[] {
  return [
    "iteration", "m_flag", "m_corr", "auto_corrected", "m_filter",
    "p_mp", "eta_k", "annotated",
    ...metricKeys(records),
  ];
}

/** One table row, values verbatim from the server record. */
export function historyRow(record: IterationRecord, keys: string[]): string[] {
  const cells = [
    String(record.iteration),
    String(record.m_flag),
    String(record.m_corr),
    String(record.auto_corrected),
    String(record.m_filter),
    String(record.p_mp),
    String(record.eta_k),
    String(record.cumulative_annotated_fraction),
  ];
  for (const key of keys) cells.push(String(record.eval[key]));
  return cells;
}

/** Flag precision has dropped below the configured floor: recommend stopping. */
export function stopRecommended(records: IterationRecord[], floor: number): boolean {
  if (records.length === 0) return false;
  return records[records.length - 1].p_mp < floor;
}

/** Inline SVG polyline for a metric series, viewBox 0..width x 0..height. */
export function sparklinePoints(
  values: number[], width: number, height: number,
  min = 0, max = 1,
): string {
  if (values.length === 0) return "";
  const span = max - min || 1;
  const step = values.length > 1 ? width / (values.length - 1) : 0;
  return values
    .map((v, i) => {
      const x = values.length === 1 ? width / 2 : i * step;
      const y = height - ((v - min) / span) * height;
      return `${round2(x)},${round2(y)}`;
    })
    .join(" ");
}

function round2(x: number): number {
  return Math.round(x * 100) / 100;
}

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export function historyTableHtml(records: IterationRecord[]): string {
  if (records.length === 0) {
    return '<p class="muted">No completed iterations yet.</p>';
  }
  const keys = metricKeys(records);
  const head = historyColumns(records)
    .map((c) => `<th>${escapeHtml(c)}</th>`)
    .join("");
  const body = records
    .map((r) => `<tr>${historyRow(r, keys).map((c) => `<td>${escapeHtml(c)}</td>`).join("")}</tr>`)
    .join("");
  return `<table><thead><tr>${head}</tr></thead><tbody>${body}</tbody></table>`;
}
