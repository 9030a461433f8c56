/** Thin typed client over the service's HTTP contract. */

import type {
  AskRequest,
  DatabaseSummary,
  ExecuteRequest,
  ExecutionOutcome,
  RetrieveResponse,
  SchemaResponse,
  ServiceConfig,
  TraceResponse,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = response.statusText;
    try {
      const body = await response.json();
      detail = typeof body.detail === "string" ? body.detail : JSON.stringify(body.detail);
    } catch {
      // keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(readonly baseUrl: string = "") {}

  private async get<T>(path: string): Promise<T> {
    return parseOrThrow<T>(await fetch(this.baseUrl + path));
  }

  private async post<T>(path: string, body: unknown): Promise<T> {
    const response = await fetch(this.baseUrl + path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return parseOrThrow<T>(response);
  }

  health(): Promise<{ status: string }> {
    return this.get("/health");
  }

  config(): Promise<ServiceConfig> {
    return this.get("/config");
  }

  async databases(): Promise<DatabaseSummary[]> {
    const payload = await this.get<{ databases: DatabaseSummary[] }>("/databases");
    return payload.databases;
  }

  schema(dbId: string): Promise<SchemaResponse> {
    return this.get(`/schema/${encodeURIComponent(dbId)}`);
  }

  retrieve(req: {
    db_id: string;
    question: string;
    evidence?: string | null;
    k?: number;
  }): Promise<RetrieveResponse> {
    return this.post("/retrieve", req);
  }

  ask(req: AskRequest): Promise<TraceResponse> {
    return this.post("/ask", req);
  }

  execute(req: ExecuteRequest): Promise<ExecutionOutcome> {
    return this.post("/execute", req);
  }
}
