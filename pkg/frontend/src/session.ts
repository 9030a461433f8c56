/** Console session state: drafts, settings, and the trace history.
 *
 * One /ask request may be in flight at a time; controls stay disabled
 * while pending. After each answer the prior trace is kept so the user
 * can compare what-if runs side by side.
 */

import type { AskRequest, ServiceConfig, TraceResponse } from "./types.js";

export const SETTING_BOUNDS = {
  k: { min: 1, max: 100 },
  maxIterations: { min: 0, max: 10 },
};

export interface Settings {
  k: number;
  maxIterations: number;
}

export interface LabeledTrace {
  trace: TraceResponse;
  settings: Settings;
  question: string;
}

function clamp(value: number, min: number, max: number): number {
  if (!Number.isFinite(value)) return min;
  return Math.min(max, Math.max(min, Math.round(value)));
}

export class ConsoleSession {
  dbId: string | null = null;
  question = "";
  evidence = "";
  settings: Settings = { k: 25, maxIterations: 3 };
  pending = false;
  current: LabeledTrace | null = null;
  previous: LabeledTrace | null = null;

  applyServiceConfig(config: ServiceConfig): void {
    this.settings = {
      k: clamp(config.k, SETTING_BOUNDS.k.min, SETTING_BOUNDS.k.max),
      maxIterations: clamp(
        config.max_iterations,
        SETTING_BOUNDS.maxIterations.min,
        SETTING_BOUNDS.maxIterations.max,
      ),
    };
  }

  setK(value: number): void {
    this.settings.k = clamp(value, SETTING_BOUNDS.k.min, SETTING_BOUNDS.k.max);
  }

  setMaxIterations(value: number): void {
    this.settings.maxIterations = clamp(
      value,
      SETTING_BOUNDS.maxIterations.min,
      SETTING_BOUNDS.maxIterations.max,
    );
  }

  selectDatabase(dbId: string): void {
    if (dbId !== this.dbId) {
      this.dbId = dbId;
      this.current = null;
      this.previous = null;
    }
  }

  canSubmit(): boolean {
    return !this.pending && this.dbId !== null && this.question.trim().length > 0;
  }

  buildAskRequest(): AskRequest {
    if (!this.canSubmit()) {
      throw new Error("session not ready to submit");
    }
    return {
      db_id: this.dbId as string,
      question: this.question.trim(),
      evidence: this.evidence.trim() ? this.evidence.trim() : null,
      k: this.settings.k,
      max_iterations: this.settings.maxIterations,
    };
  }

  beginAsk(): void {
    this.pending = true;
  }

  completeAsk(trace: TraceResponse): void {
    this.previous = this.current;
    this.current = {
      trace,
      settings: { ...this.settings },
      question: this.question.trim(),
    };
    this.pending = false;
  }

  failAsk(): void {
    this.pending = false;
  }
}

/** Shape check for a trace payload; throws on anything unrenderable. */
export function validateTrace(payload: unknown): TraceResponse {
  const trace = payload as TraceResponse;
  if (!trace || typeof trace !== "object" || !Array.isArray(trace.attempts)) {
    throw new Error("malformed trace: missing attempts");
  }
  for (const attempt of trace.attempts) {
    if (typeof attempt.sql !== "string" || !attempt.outcome ||
        typeof attempt.outcome.status !== "string") {
      throw new Error("malformed trace: bad attempt record");
    }
  }
  if (trace.retrieval !== null && !Array.isArray(trace.retrieval)) {
    throw new Error("malformed trace: bad retrieval block");
  }
  if (typeof trace.executable !== "boolean") {
    throw new Error("malformed trace: missing executable flag");
  }
  return trace;
}
