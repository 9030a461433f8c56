/** Wire types mirrored from the service contract. */

export interface ServiceConfig {
  k: number;
  max_iterations: number;
  row_cap: number;
  timeout: number;
}

export interface DatabaseSummary {
  db_id: string;
  tables: number;
  columns: number;
}

export interface SchemaColumn {
  name: string;
  type: string;
  primary_key: boolean;
  description: string | null;
  value_description: string | null;
  sample_values: string[];
}

export interface SchemaResponse {
  db_id: string;
  tables: { name: string; columns: SchemaColumn[] }[];
  foreign_keys: [string, string][];
}

export interface RetrievedColumn {
  table: string;
  column: string;
  score: number;
}

export interface RetrieveResponse {
  db_id: string;
  k: number;
  columns: RetrievedColumn[];
}

export type OutcomeStatus = "success" | "failure" | "timeout";

export type ErrorCategory =
  | "syntax_error"
  | "no_such_column"
  | "no_such_table"
  | "other";

export interface ExecutionOutcome {
  status: OutcomeStatus;
  rows: unknown[][] | null;
  row_count: number | null;
  rows_truncated: boolean;
  error_message: string | null;
  error_category: ErrorCategory | null;
  elapsed: number;
}

export interface TraceAttempt {
  prompt: string;
  sql: string;
  outcome: ExecutionOutcome;
}

export interface TraceResponse {
  question_id: string;
  db_id: string;
  retrieval: RetrievedColumn[] | null;
  attempts: TraceAttempt[];
  final_sql: string;
  executable: boolean;
  iterations_used: number;
  generation_error: string | null;
}

export interface AskRequest {
  db_id: string;
  question: string;
  evidence?: string | null;
  k?: number;
  max_iterations?: number;
}

export interface ExecuteRequest {
  db_id: string;
  sql: string;
}
