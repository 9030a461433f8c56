/** DOM rendering for traces, retrieval panels, and result tables.
 *
 * Everything shown comes verbatim from the service response payload;
 * nothing is synthesized client-side. Failed attempts get
 * category-colored badges.
 */

import type { LabeledTrace } from "./session.js";
import type { RetrievedColumn, TraceAttempt, TraceResponse } from "./types.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function statusBadge(attempt: TraceAttempt): HTMLElement {
  const outcome = attempt.outcome;
  if (outcome.status === "success") {
    return el("span", "badge badge-success", "success");
  }
  const category = outcome.error_category ?? "other";
  const label = outcome.status === "timeout" ? "timeout" : category;
  return el("span", `badge badge-failure badge-${category}`, label);
}

function renderRows(rows: unknown[][], truncated: boolean, total: number | null): HTMLElement {
  const wrap = el("div", "result-rows");
  const count = total ?? rows.length;
  wrap.appendChild(el("div", "row-count", `${count} row${count === 1 ? "" : "s"}`));
  const table = el("table", "rows-table");
  for (const row of rows) {
    const tr = el("tr");
    for (const cell of row) {
      tr.appendChild(el("td", undefined, cell === null ? "NULL" : String(cell)));
    }
    table.appendChild(tr);
  }
  wrap.appendChild(table);
  if (truncated) {
    wrap.appendChild(el("div", "truncation-note", "additional rows truncated by the service"));
  }
  return wrap;
}

export function renderAttempt(attempt: TraceAttempt, index: number): HTMLElement {
  const failed = attempt.outcome.status !== "success";
  const item = el("li", failed ? "attempt attempt-failed" : "attempt attempt-ok");
  const header = el("div", "attempt-header");
  header.appendChild(el("span", "attempt-index", `attempt ${index}`));
  header.appendChild(statusBadge(attempt));
  item.appendChild(header);
  item.appendChild(el("pre", "sql", attempt.sql));
  if (failed && attempt.outcome.error_message) {
    item.appendChild(el("div", "error-message", attempt.outcome.error_message));
  }
  return item;
}

export function renderTrace(labeled: LabeledTrace): HTMLElement {
  const { trace, settings } = labeled;
  const root = el("section", "trace");
  const title = `k=${settings.k}, budget=${settings.maxIterations}`;
  root.appendChild(el("h3", "trace-title", title));

  if (!trace.executable) {
    root.appendChild(el("div", "no-valid-sql",
      "no valid SQL within budget"));
  }
  if (trace.generation_error) {
    root.appendChild(el("div", "generation-error",
      `generation error: ${trace.generation_error}`));
  }

  const timeline = el("ol", "attempt-timeline");
  trace.attempts.forEach((attempt, i) => timeline.appendChild(renderAttempt(attempt, i)));
  root.appendChild(timeline);

  const last = trace.attempts[trace.attempts.length - 1];
  if (trace.executable && last.outcome.rows) {
    root.appendChild(renderRows(last.outcome.rows, last.outcome.rows_truncated,
      last.outcome.row_count));
  }
  return root;
}

export function renderRetrievalPanel(columns: RetrievedColumn[] | null): HTMLElement {
  const panel = el("section", "retrieval-panel");
  panel.appendChild(el("h3", undefined, "retrieved columns"));
  if (!columns || columns.length === 0) {
    panel.appendChild(el("div", "retrieval-empty", "retrieval disabled or empty"));
    return panel;
  }
  const list = el("ol", "retrieval-list");
  for (const column of columns) {
    const item = el("li", "retrieval-item");
    item.appendChild(el("span", "column-name", `${column.table}.${column.column}`));
    item.appendChild(el("span", "column-score", column.score.toFixed(4)));
    list.appendChild(item);
  }
  panel.appendChild(list);
  return panel;
}

export function renderComparison(current: LabeledTrace, previous: LabeledTrace | null): HTMLElement {
  const wrap = el("div", "comparison");
  const currentPane = el("div", "pane pane-current");
  currentPane.appendChild(el("h2", undefined, "latest"));
  currentPane.appendChild(renderTrace(current));
  wrap.appendChild(currentPane);
  if (previous) {
    const previousPane = el("div", "pane pane-previous");
    previousPane.appendChild(el("h2", undefined, "previous"));
    previousPane.appendChild(renderTrace(previous));
    wrap.appendChild(previousPane);
  }
  return wrap;
}

export function renderErrorPanel(message: string): HTMLElement {
  const panel = el("section", "error-panel");
  panel.appendChild(el("h3", undefined, "request failed"));
  panel.appendChild(el("div", "error-message", message));
  return panel;
}

export function renderTraceView(
  container: HTMLElement,
  current: LabeledTrace,
  previous: LabeledTrace | null,
): void {
  container.replaceChildren();
  const trace: TraceResponse = current.trace;
  container.appendChild(renderRetrievalPanel(trace.retrieval));
  container.appendChild(renderComparison(current, previous));
}
