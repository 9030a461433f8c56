"""Sandboxed SQLite execution, result-set comparison, and error taxonomy.

Databases are opened read-only and a wall-clock cap is enforced through
sqlite's progress handler, so runaway queries surface as timeouts instead
of hanging the caller. Failures never raise: every outcome, including
rejected write statements, is reported inside ExecutionOutcome.
"""

from __future__ import annotations

import logging
import sqlite3
import time
from collections import Counter
from dataclasses import dataclass

log = logging.getLogger(__name__)

STATUS_SUCCESS = "success"
STATUS_FAILURE = "failure"
STATUS_TIMEOUT = "timeout"

SYNTAX_ERROR = "syntax_error"
NO_SUCH_COLUMN = "no_such_column"
NO_SUCH_TABLE = "no_such_table"
OTHER_ERROR = "other"

ERROR_CATEGORIES = (SYNTAX_ERROR, NO_SUCH_COLUMN, NO_SUCH_TABLE, OTHER_ERROR)

DEFAULT_TIMEOUT = 30.0
_PROGRESS_OPCODES = 200


@dataclass(frozen=True)
class ExecutionOutcome:
    status: str
    rows: tuple | None = None
    error_message: str | None = None
    error_category: str | None = None
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == STATUS_SUCCESS

    def to_dict(self, row_cap: int | None = None) -> dict:
        rows = None
        truncated = False
        if self.rows is not None:
            rows = [list(r) for r in self.rows]
            if row_cap is not None and len(rows) > row_cap:
                rows = rows[:row_cap]
                truncated = True
        return {
            "status": self.status,
            "rows": rows,
            "row_count": len(self.rows) if self.rows is not None else None,
            "rows_truncated": truncated,
            "error_message": self.error_message,
            "error_category": self.error_category,
            "elapsed": self.elapsed,
        }


def classify_error(message: str) -> str:
    """Map an engine error message to one of the four categories.

    Case-insensitive substring rules; the column/table rules take
    precedence over the syntax rule. Total: every message maps somewhere.
    """
    if not message or not message.strip():
        raise ValueError("error message must be non-empty")
    lowered = message.lower()
    if "no such column" in lowered:
        return NO_SUCH_COLUMN
    if "no such table" in lowered:
        return NO_SUCH_TABLE
    if "syntax error" in lowered:
        return SYNTAX_ERROR
    return OTHER_ERROR


def execute_sql(db_path, sql: str, timeout: float = DEFAULT_TIMEOUT) -> ExecutionOutcome:
    """Run one statement against a read-only connection.

    Returns success with the fetched rows, failure with the engine message
    verbatim, or timeout when the wall-clock cap is exceeded (categorized
    as "other", like every non-syntax, non-schema failure).
    """
    if not sql or not sql.strip():
        raise ValueError("sql must be non-empty")
    started = time.monotonic()
    deadline = started + timeout
    timed_out = False

    def _progress():
        nonlocal timed_out
        if time.monotonic() > deadline:
            timed_out = True
            return 1
        return 0

    conn = None
    try:
        conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
        conn.set_progress_handler(_progress, _PROGRESS_OPCODES)
        cursor = conn.execute(sql)
        rows = tuple(tuple(row) for row in cursor.fetchall())
        return ExecutionOutcome(status=STATUS_SUCCESS, rows=rows,
                                elapsed=time.monotonic() - started)
    except sqlite3.Error as exc:
        elapsed = time.monotonic() - started
        if timed_out:
            return ExecutionOutcome(
                status=STATUS_TIMEOUT,
                error_message=f"execution timed out after {timeout}s ({exc})",
                error_category=OTHER_ERROR,
                elapsed=elapsed,
            )
        message = str(exc)
        return ExecutionOutcome(
            status=STATUS_FAILURE,
            error_message=message,
            error_category=classify_error(message),
            elapsed=elapsed,
        )
    finally:
        if conn is not None:
            conn.close()


def canonical_cell(value, float_tol: float = 0.0):
    """Unify integral reals with integers; keep text exact, NULL distinct."""
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        if float_tol > 0.0:
            value = round(value / float_tol) * float_tol
        if value.is_integer():
            return int(value)
        return value
    return value


def canonical_rows(rows, float_tol: float = 0.0) -> list[tuple]:
    return [tuple(canonical_cell(cell, float_tol) for cell in row) for row in rows]


def results_match(a, b, set_semantics: bool = False, float_tol: float = 0.0) -> bool:
    """Compare two result sets after canonicalization.

    Row order never matters; column order within a row does. The default is
    multiset comparison, so duplicate-row multiplicity must agree;
    ``set_semantics`` reproduces harnesses that deduplicate rows.
    ``float_tol`` quantizes float cells before comparing (exploratory use).
    """
    rows_a = canonical_rows(a, float_tol)
    rows_b = canonical_rows(b, float_tol)
    if set_semantics:
        return set(rows_a) == set(rows_b)
    return Counter(rows_a) == Counter(rows_b)


def execution_accuracy(predictions: dict, golds: dict, db_path_for,
                       timeout: float = DEFAULT_TIMEOUT,
                       set_semantics: bool = False,
                       float_tol: float = 0.0) -> tuple[float, dict]:
    """Fraction of questions whose predicted SQL matches the gold result set.

    Predictions that fail or time out score 0. Questions whose gold SQL does
    not execute are corpus defects: excluded from the denominator with a
    warning and flagged in the per-question details.

    Args:
        predictions / golds: question_id -> SQL, with equal key sets.
        db_path_for: mapping or callable question_id -> database path.
    """
    if set(predictions) != set(golds):
        missing = set(predictions) ^ set(golds)
        raise ValueError(f"prediction/gold id mismatch: {sorted(missing)[:5]}")
    resolve = db_path_for if callable(db_path_for) else db_path_for.__getitem__
    details = {}
    n_scored = 0
    n_matched = 0
    for qid in predictions:
        db_path = resolve(qid)
        gold_outcome = execute_sql(db_path, golds[qid], timeout=timeout)
        if not gold_outcome.ok:
            log.warning("question %s: gold SQL failed to execute (%s); excluded",
                        qid, gold_outcome.error_message)
            details[qid] = {"match": None, "gold_error": gold_outcome.error_message}
            continue
        pred_outcome = execute_sql(db_path, predictions[qid], timeout=timeout)
        match = pred_outcome.ok and results_match(
            pred_outcome.rows, gold_outcome.rows,
            set_semantics=set_semantics, float_tol=float_tol,
        )
        details[qid] = {
            "match": match,
            "pred_status": pred_outcome.status,
            "pred_error_category": pred_outcome.error_category,
        }
        n_scored += 1
        n_matched += int(match)
    accuracy = n_matched / n_scored if n_scored else 0.0
    return accuracy, details
