"""The inference loop: retrieve, prompt, generate, execute, feed errors back.

Retrieval runs once per question and is reused across correction attempts;
the feedback prompt carries only the most recent failed SQL and its error
message. The loop stops at the first successful execution or after the
iteration budget is spent. Self-correction only ever triggers on execution
failure: an executable-but-wrong query is final.
"""

from __future__ import annotations

import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .contrastive import ProjectionHead
from .corpus import QuestionRecord
from .errors import GenerationError
from .executor import ExecutionOutcome, execute_sql, execution_accuracy
from .index import SchemaIndex
from .prompts import build_rft_prompt, build_sft_prompt, make_context
from .retriever import DEFAULT_K, RetrievalResult, retrieve_columns
from .schema import DatabaseSchema

log = logging.getLogger(__name__)

DEFAULT_MAX_ITERATIONS = 3


@dataclass(frozen=True)
class Attempt:
    prompt: str
    sql: str
    outcome: ExecutionOutcome


@dataclass
class InferenceTrace:
    question_id: str
    db_id: str
    retrieval: RetrievalResult | None
    attempts: list[Attempt]
    generation_error: str | None = None

    @property
    def final_sql(self) -> str:
        return self.attempts[-1].sql if self.attempts else ""

    @property
    def executable(self) -> bool:
        return bool(self.attempts) and self.attempts[-1].outcome.ok

    @property
    def iterations_used(self) -> int:
        return max(0, len(self.attempts) - 1)

    def to_dict(self, row_cap: int | None = None) -> dict:
        return {
            "question_id": self.question_id,
            "db_id": self.db_id,
            "retrieval": None if self.retrieval is None else [
                {
                    "table": ref.table_name,
                    "column": ref.column_name,
                    "score": score,
                }
                for ref, score in self.retrieval.ranked_columns
            ],
            "attempts": [
                {
                    "prompt": a.prompt,
                    "sql": a.sql,
                    "outcome": a.outcome.to_dict(row_cap=row_cap),
                }
                for a in self.attempts
            ],
            "final_sql": self.final_sql,
            "executable": self.executable,
            "iterations_used": self.iterations_used,
            "generation_error": self.generation_error,
        }


@dataclass
class PipelineDeps:
    """Everything one question needs: index, schema, provider, generator, db."""

    index: SchemaIndex
    schema: DatabaseSchema
    provider: object
    generator: object
    db_path: object
    head: ProjectionHead | None = None
    k: int = DEFAULT_K
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    timeout: float = 30.0
    retrieval_enabled: bool = True


def _schema_slice(deps: PipelineDeps, q: QuestionRecord):
    """Retrieved columns in rank order, or the first k schema columns."""
    if not deps.retrieval_enabled:
        return None, list(deps.schema.columns[: deps.k])
    retrieval = retrieve_columns(q, deps.index, deps.provider, deps.head, k=deps.k)
    columns = []
    for ref in retrieval.refs():
        col = deps.schema.resolve(ref)
        if col is not None:
            columns.append(col)
    return retrieval, columns


def answer_question(q: QuestionRecord, deps: PipelineDeps) -> InferenceTrace:
    """Run the retrieve/generate/execute loop for one question."""
    retrieval, columns = _schema_slice(deps, q)
    trace = InferenceTrace(question_id=q.question_id, db_id=q.db_id,
                           retrieval=retrieval, attempts=[])

    failed_sql = None
    error_message = None
    for _attempt in range(deps.max_iterations + 1):
        ctx = make_context(
            question=q.question,
            columns=columns,
            schema=deps.schema,
            k=deps.k,
            evidence=q.evidence,
            failed_sql=failed_sql,
            error_message=error_message,
        )
        prompt = build_sft_prompt(ctx) if failed_sql is None else build_rft_prompt(ctx)
        try:
            sql = deps.generator.generate(prompt)
        except GenerationError as exc:
            trace.generation_error = str(exc)
            log.warning("question %s: generation failed: %s", q.question_id, exc)
            break
        outcome = execute_sql(deps.db_path, sql, timeout=deps.timeout)
        trace.attempts.append(Attempt(prompt=prompt, sql=sql, outcome=outcome))
        if outcome.ok:
            break
        failed_sql = sql
        error_message = outcome.error_message
    return trace


@dataclass
class BatchSummary:
    n_questions: int
    n_executable: int
    iteration_histogram: dict[int, int]
    errors_before: dict[str, int]
    errors_after: dict[str, int]
    ex: float | None = None
    ex_details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "n_executable": self.n_executable,
            "iteration_histogram": {str(k): v for k, v in sorted(self.iteration_histogram.items())},
            "errors_before": dict(sorted(self.errors_before.items())),
            "errors_after": dict(sorted(self.errors_after.items())),
            "ex": self.ex,
        }


def summarize_traces(traces, corpus=None, db_path_for=None,
                     timeout: float = 30.0) -> BatchSummary:
    """Aggregate traces: iteration histogram, error mix before/after, EX."""
    histogram = Counter(t.iterations_used for t in traces)
    before = Counter()
    after = Counter()
    for t in traces:
        if not t.attempts:
            continue
        first, last = t.attempts[0], t.attempts[-1]
        if not first.outcome.ok:
            before[first.outcome.error_category] += 1
        if not last.outcome.ok:
            after[last.outcome.error_category] += 1
    summary = BatchSummary(
        n_questions=len(traces),
        n_executable=sum(1 for t in traces if t.executable),
        iteration_histogram=dict(histogram),
        errors_before=dict(before),
        errors_after=dict(after),
    )
    if corpus is not None and db_path_for is not None:
        golds = {q.question_id: q.gold_sql for q in corpus if q.gold_sql}
        preds = {t.question_id: t.final_sql for t in traces
                 if t.question_id in golds and t.final_sql}
        skipped = {t.question_id: "" for t in traces
                   if t.question_id in golds and not t.final_sql}
        if preds or skipped:
            gold_subset = {qid: golds[qid] for qid in preds}
            ex_hits = 0
            details = {}
            if preds:
                _ex, details = execution_accuracy(preds, gold_subset, db_path_for,
                                                  timeout=timeout)
                ex_hits = sum(1 for d in details.values() if d.get("match"))
            for qid in skipped:
                details[qid] = {"match": False, "pred_status": "no_sql"}
            scored = sum(1 for d in details.values() if d.get("match") is not None)
            summary.ex = ex_hits / scored if scored else 0.0
            summary.ex_details = details
    return summary


def run_batch(corpus, deps_for, parallelism: int = 1,
              db_path_for=None, timeout: float = 30.0):
    """Answer every question; per-question errors are isolated.

    Args:
        corpus: question records.
        deps_for: callable question -> PipelineDeps (fresh scripted
            generators per question keep parallel runs deterministic).
        parallelism: worker threads; each execution opens its own connection.
        db_path_for: optional question_id -> db path for EX scoring.
    """
    traces: list[InferenceTrace] = [None] * len(corpus)

    def run_one(i_q):
        i, q = i_q
        try:
            return i, answer_question(q, deps_for(q))
        except Exception as exc:  # isolate per-question failures
            log.error("question %s failed: %s", q.question_id, exc)
            return i, InferenceTrace(question_id=q.question_id, db_id=q.db_id,
                                     retrieval=None, attempts=[],
                                     generation_error=str(exc))

    if parallelism <= 1:
        for item in enumerate(corpus):
            i, trace = run_one(item)
            traces[i] = trace
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            for i, trace in pool.map(run_one, enumerate(corpus)):
                traces[i] = trace

    summary = summarize_traces(traces, corpus=corpus, db_path_for=db_path_for,
                               timeout=timeout)
    return traces, summary
