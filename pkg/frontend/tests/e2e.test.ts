// @vitest-environment happy-dom
//
// Drives the real service end to end: spawns `squill serve` over a
// generated fixture with a scripted fail-then-succeed generator, then
// exercises the console's client, session, and rendering against it.
import { execFileSync, spawn, type ChildProcess } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import { ConsoleSession, validateTrace } from "../src/session.js";
import { renderComparison, renderRetrievalPanel, renderTrace } from "../src/render.js";

const PORT = 18000 + (process.pid % 2000);
const BASE = `http://127.0.0.1:${PORT}`;

let server: ChildProcess | null = null;
let question = "";
let dbId = "";

async function waitForHealth(client: ApiClient, attempts = 60): Promise<void> {
  for (let i = 0; i < attempts; i++) {
    try {
      const payload = await client.health();
      if (payload.status === "ok") return;
    } catch {
      // not up yet
    }
    await new Promise((resolve) => setTimeout(resolve, 500));
  }
  throw new Error("service did not become healthy");
}

beforeAll(async () => {
  const root = mkdtempSync(join(tmpdir(), "squill-e2e-"));
  execFileSync("squill", [
    "make-fixture", "--out", root,
    "--databases-count", "2", "--questions-per-db", "4",
  ]);
  const corpus = JSON.parse(readFileSync(join(root, "corpus.json"), "utf-8"));
  const plans = JSON.parse(
    readFileSync(join(root, "plans", "repairable.json"), "utf-8"));
  const record = corpus[0];
  question = record.question;
  dbId = record.db_id;
  // fail-then-succeed pairs, repeated so several asks can run
  const script: string[] = [];
  for (let i = 0; i < 8; i++) script.push(...plans[record.question_id]);
  const scriptPath = join(root, "e2e-script.json");
  writeFileSync(scriptPath, JSON.stringify(script));

  server = spawn("squill", [
    "serve",
    "--databases", join(root, "databases"),
    "--script", scriptPath,
    "--k", "10",
    "--max-iterations", "3",
    "--port", String(PORT),
  ], { stdio: ["ignore", "pipe", "pipe"] });
  server.on("error", (error) => {
    throw error;
  });
  await waitForHealth(new ApiClient(BASE));
});

afterAll(() => {
  server?.kill("SIGTERM");
});

describe("console against the live service", () => {
  it("renders a two-attempt trace with one failure and one success badge", async () => {
    const api = new ApiClient(BASE);
    const session = new ConsoleSession();
    session.applyServiceConfig(await api.config());
    session.selectDatabase(dbId);
    session.question = question;

    const request = session.buildAskRequest();
    session.beginAsk();
    const trace = validateTrace(await api.ask(request));
    session.completeAsk(trace);

    expect(trace.attempts.length).toBe(2);
    expect(trace.executable).toBe(true);
    expect(trace.iterations_used).toBe(1);

    const view = renderTrace(session.current!);
    const badges = view.querySelectorAll(".badge");
    expect(badges.length).toBe(2);
    expect(badges[0].className).toContain("badge-failure");
    expect(badges[0].className).toContain("badge-syntax_error");
    expect(badges[1].className).toContain("badge-success");
    expect(view.querySelectorAll(".attempt-failed").length).toBe(1);
  });

  it("lists k retrieved columns with descending scores", async () => {
    const api = new ApiClient(BASE);
    const response = await api.retrieve({ db_id: dbId, question, k: 10 });
    expect(response.columns.length).toBe(10);
    const scores = response.columns.map((c) => c.score);
    const sorted = [...scores].sort((a, b) => b - a);
    expect(scores).toEqual(sorted);

    const panel = renderRetrievalPanel(response.columns);
    expect(panel.querySelectorAll(".retrieval-item").length).toBe(10);
    const rendered = Array.from(
      panel.querySelectorAll(".column-score"),
      (node) => Number(node.textContent),
    );
    expect(rendered).toEqual([...rendered].sort((a, b) => b - a));
  });

  it("re-asks with a different budget and shows both traces", async () => {
    const api = new ApiClient(BASE);
    const session = new ConsoleSession();
    session.applyServiceConfig(await api.config());
    session.selectDatabase(dbId);
    session.question = question;

    const first = session.buildAskRequest();
    session.beginAsk();
    session.completeAsk(validateTrace(await api.ask(first)));
    expect(session.current!.trace.executable).toBe(true);

    // budget 0: the scripted first attempt fails and nothing can be repaired
    session.setMaxIterations(0);
    const second = session.buildAskRequest();
    session.beginAsk();
    session.completeAsk(validateTrace(await api.ask(second)));

    expect(session.previous).not.toBeNull();
    const view = renderComparison(session.current!, session.previous);
    const panes = view.querySelectorAll(".pane");
    expect(panes.length).toBe(2);
    expect(view.querySelector(".pane-current .no-valid-sql")).not.toBeNull();
    expect(view.querySelector(".pane-previous .badge-success")).not.toBeNull();
    expect(view.querySelector(".pane-current .trace-title")?.textContent)
      .toContain("budget=0");
    expect(view.querySelector(".pane-previous .trace-title")?.textContent)
      .toContain("budget=3");
  });

  it("unknown database returns a structured 404", async () => {
    const api = new ApiClient(BASE);
    await expect(api.schema("ghost")).rejects.toMatchObject({ status: 404 });
  });
});
