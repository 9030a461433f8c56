/** Bootstraps the console against the service that serves this bundle. */

import { ApiClient, ApiError } from "./api.js";
import { ConsoleSession, SETTING_BOUNDS, validateTrace } from "./session.js";
import { renderErrorPanel, renderTraceView } from "./render.js";

const api = new ApiClient("");
const session = new ConsoleSession();

function byId<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

const dbSelect = byId<HTMLSelectElement>("db-select");
const questionInput = byId<HTMLTextAreaElement>("question-input");
const evidenceInput = byId<HTMLTextAreaElement>("evidence-input");
const kInput = byId<HTMLInputElement>("k-input");
const iterInput = byId<HTMLInputElement>("iterations-input");
const askButton = byId<HTMLButtonElement>("ask-button");
const statusLine = byId<HTMLDivElement>("status-line");
const traceContainer = byId<HTMLDivElement>("trace-container");
const schemaContainer = byId<HTMLDivElement>("schema-container");

function syncControls(): void {
  kInput.value = String(session.settings.k);
  iterInput.value = String(session.settings.maxIterations);
  const busy = session.pending;
  for (const control of [dbSelect, questionInput, evidenceInput, kInput, iterInput]) {
    control.disabled = busy;
  }
  askButton.disabled = busy || !session.canSubmit();
  statusLine.textContent = busy ? "asking..." : "";
}

async function refreshSchema(): Promise<void> {
  schemaContainer.replaceChildren();
  if (!session.dbId) return;
  const schema = await api.schema(session.dbId);
  for (const table of schema.tables) {
    const details = document.createElement("details");
    const summary = document.createElement("summary");
    summary.textContent = `${table.name} (${table.columns.length} columns)`;
    details.appendChild(summary);
    const list = document.createElement("ul");
    for (const column of table.columns) {
      const item = document.createElement("li");
      const flags = column.primary_key ? " [pk]" : "";
      item.textContent = `${column.name}: ${column.type}${flags}`;
      list.appendChild(item);
    }
    details.appendChild(list);
    schemaContainer.appendChild(details);
  }
}

async function submitAsk(): Promise<void> {
  if (!session.canSubmit()) return;
  const request = session.buildAskRequest();
  session.beginAsk();
  syncControls();
  try {
    const payload = await api.ask(request);
    const trace = validateTrace(payload);
    session.completeAsk(trace);
    renderTraceView(traceContainer, session.current!, session.previous);
  } catch (error) {
    session.failAsk();
    const message = error instanceof ApiError
      ? error.message
      : `unexpected error: ${String(error)}`;
    traceContainer.replaceChildren(renderErrorPanel(message));
  } finally {
    syncControls();
  }
}

async function boot(): Promise<void> {
  try {
    session.applyServiceConfig(await api.config());
  } catch {
    // service defaults stay in place
  }
  const databases = await api.databases();
  dbSelect.replaceChildren();
  for (const db of databases) {
    const option = document.createElement("option");
    option.value = db.db_id;
    option.textContent = `${db.db_id} (${db.tables} tables, ${db.columns} columns)`;
    dbSelect.appendChild(option);
  }
  if (databases.length > 0) {
    session.selectDatabase(databases[0].db_id);
    dbSelect.value = databases[0].db_id;
    await refreshSchema();
  }

  kInput.min = String(SETTING_BOUNDS.k.min);
  kInput.max = String(SETTING_BOUNDS.k.max);
  iterInput.min = String(SETTING_BOUNDS.maxIterations.min);
  iterInput.max = String(SETTING_BOUNDS.maxIterations.max);

  dbSelect.addEventListener("change", () => {
    session.selectDatabase(dbSelect.value);
    traceContainer.replaceChildren();
    void refreshSchema();
    syncControls();
  });
  questionInput.addEventListener("input", () => {
    session.question = questionInput.value;
    syncControls();
  });
  evidenceInput.addEventListener("input", () => {
    session.evidence = evidenceInput.value;
  });
  kInput.addEventListener("change", () => {
    session.setK(Number(kInput.value));
    syncControls();
  });
  iterInput.addEventListener("change", () => {
    session.setMaxIterations(Number(iterInput.value));
    syncControls();
  });
  askButton.addEventListener("click", () => void submitAsk());
  syncControls();
}

void boot();
