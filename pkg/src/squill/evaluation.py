"""Corpus-level evaluation, ablation drivers, and hyperparameter sweeps.

Reports are pure functions of the trace archive: re-running the reporting
over the same traces yields identical output. Accuracy at iteration budget
b is scored by replaying each trace's attempt min(b, last): attempts after
the first success never exist, so budgets only ever replace failing SQL.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

from .contrastive import ProjectionHead, TrainerConfig
from .executor import ERROR_CATEGORIES, execute_sql, results_match
from .index import build_index
from .retriever import RetrievalMetrics, compute_retrieval_metrics, retrieve_columns
from .training import gold_columns_for_corpus, train_head_on_corpus

log = logging.getLogger(__name__)

DEFAULT_KS = (10, 15, 20, 25)
DEFAULT_MARGINS = (0.0, 0.1, 0.2)
DEFAULT_NEG_LIMITS = (3, 4, 5, 6, 7, 8)


@dataclass
class EvaluationReport:
    n_questions: int
    ex_overall: float
    ex_by_difficulty: dict[str, float]
    iteration_gains: list[float]
    error_distribution: dict[str, tuple[int, int]]
    retrieval_metrics: RetrievalMetrics | None = None
    per_question: dict = field(default_factory=dict)
    n_gold_defects: int = 0

    def to_dict(self) -> dict:
        return {
            "n_questions": self.n_questions,
            "ex_overall": self.ex_overall,
            "ex_by_difficulty": dict(sorted(self.ex_by_difficulty.items())),
            "iteration_gains": self.iteration_gains,
            "error_distribution": {
                cat: {"before": pair[0], "after": pair[1]}
                for cat, pair in sorted(self.error_distribution.items())
            },
            "retrieval_metrics": self.retrieval_metrics.to_dict()
            if self.retrieval_metrics else None,
            "n_gold_defects": self.n_gold_defects,
            "per_question": {k: self.per_question[k] for k in sorted(self.per_question)},
        }


class _ExecutionCache:
    def __init__(self, timeout: float):
        self.timeout = timeout
        self._cache: dict = {}

    def run(self, db_path, sql: str):
        key = (str(db_path), sql)
        if key not in self._cache:
            self._cache[key] = execute_sql(db_path, sql, timeout=self.timeout)
        return self._cache[key]


def evaluate_traces(traces, corpus, db_path_for, timeout: float = 30.0,
                    gold_column_overrides=None, schemas=None,
                    set_semantics: bool = False,
                    float_tol: float = 0.0) -> EvaluationReport:
    """Score a trace archive against a corpus with gold SQL.

    Questions whose gold SQL fails to execute are corpus defects: excluded
    from every accuracy denominator, with a warning. Retrieval metrics are
    included when traces carry retrieval and schemas are provided (gold
    columns resolved from gold SQL, or taken from the override map).
    """
    by_id = {q.question_id: q for q in corpus}
    resolve = db_path_for if callable(db_path_for) else db_path_for.__getitem__
    cache = _ExecutionCache(timeout)

    max_budget = max((t.iterations_used for t in traces), default=0)
    matches_at: list[dict[str, bool]] = [dict() for _ in range(max_budget + 1)]
    defects = 0
    per_question = {}
    for trace in traces:
        q = by_id.get(trace.question_id)
        if q is None or not q.gold_sql:
            continue
        db_path = resolve(trace.question_id)
        gold_outcome = cache.run(db_path, q.gold_sql)
        if not gold_outcome.ok:
            defects += 1
            log.warning("question %s: gold SQL failed (%s); excluded",
                        trace.question_id, gold_outcome.error_message)
            per_question[trace.question_id] = {"gold_error": gold_outcome.error_message}
            continue
        for budget in range(max_budget + 1):
            if trace.attempts:
                attempt = trace.attempts[min(budget, len(trace.attempts) - 1)]
                pred = cache.run(db_path, attempt.sql)
                match = pred.ok and results_match(pred.rows, gold_outcome.rows,
                                                  set_semantics=set_semantics,
                                                  float_tol=float_tol)
            else:
                match = False
            matches_at[budget][trace.question_id] = match
        per_question[trace.question_id] = {
            "match": matches_at[max_budget][trace.question_id],
            "executable": trace.executable,
            "iterations_used": trace.iterations_used,
            "difficulty": q.difficulty or "unlabeled",
        }

    scored = list(matches_at[0].keys())
    iteration_gains = [
        (sum(1 for qid in scored if matches_at[b][qid]) / len(scored)) if scored else 0.0
        for b in range(max_budget + 1)
    ]
    ex_overall = iteration_gains[-1] if iteration_gains else 0.0

    buckets: dict[str, list[bool]] = {}
    for qid in scored:
        label = per_question[qid]["difficulty"]
        buckets.setdefault(label, []).append(matches_at[max_budget][qid])
    ex_by_difficulty = {
        label: sum(flags) / len(flags) for label, flags in buckets.items()
    }

    distribution = {cat: [0, 0] for cat in ERROR_CATEGORIES}
    for trace in traces:
        if not trace.attempts:
            continue
        first, last = trace.attempts[0], trace.attempts[-1]
        if not first.outcome.ok:
            distribution[first.outcome.error_category][0] += 1
        if not last.outcome.ok:
            distribution[last.outcome.error_category][1] += 1

    retrieval_metrics = None
    if schemas is not None:
        results = [t.retrieval for t in traces if t.retrieval is not None]
        if results:
            gold_map = gold_columns_for_corpus(
                [by_id[r.question_id] for r in results if r.question_id in by_id],
                schemas, overrides=gold_column_overrides,
            )
            scoreable = [r for r in results if r.question_id in gold_map]
            if scoreable:
                retrieval_metrics = compute_retrieval_metrics(scoreable, gold_map)

    return EvaluationReport(
        n_questions=len(scored),
        ex_overall=ex_overall,
        ex_by_difficulty=ex_by_difficulty,
        iteration_gains=iteration_gains,
        error_distribution={cat: tuple(pair) for cat, pair in distribution.items()},
        retrieval_metrics=retrieval_metrics,
        per_question=per_question,
        n_gold_defects=defects,
    )


# --- retrieval quality and sweeps -------------------------------------------

def retrieval_quality(records, schemas, provider, head: ProjectionHead | None,
                      k: int, gold_overrides=None) -> RetrievalMetrics:
    """Retrieve for every question and score against resolved gold columns."""
    gold_map = gold_columns_for_corpus(records, schemas, overrides=gold_overrides)
    indexes = {}
    results = []
    for q in records:
        if q.question_id not in gold_map:
            continue
        if q.db_id not in indexes:
            indexes[q.db_id] = build_index(schemas[q.db_id], provider, head)
        results.append(retrieve_columns(q, indexes[q.db_id], provider, head, k=k))
    if not results:
        raise ValueError("no scoreable questions (no gold columns resolved)")
    return compute_retrieval_metrics(results, gold_map)


@dataclass(frozen=True)
class SweepRow:
    corpus_name: str
    head_label: str
    margin: float | None
    neg_limit: int | None
    k: int
    tpr: float
    fpr: float
    slr: float

    def to_dict(self) -> dict:
        return {
            "corpus": self.corpus_name,
            "head": self.head_label,
            "margin": self.margin,
            "neg_limit": self.neg_limit,
            "k": self.k,
            "tpr": self.tpr,
            "fpr": self.fpr,
            "slr": self.slr,
        }


def _row(corpus_name, head_label, margin, neg_limit, k, metrics) -> SweepRow:
    return SweepRow(corpus_name=corpus_name, head_label=head_label, margin=margin,
                    neg_limit=neg_limit, k=k, tpr=metrics.tpr, fpr=metrics.fpr,
                    slr=metrics.slr)


def run_k_sweep(corpus_name, records, schemas, provider, head, head_label,
                ks=DEFAULT_KS, gold_overrides=None) -> list[SweepRow]:
    """Retrieval metrics across k for a fixed head; TPR/SLR rise with k."""
    return [
        _row(corpus_name, head_label, None, None, k,
             retrieval_quality(records, schemas, provider, head, k,
                               gold_overrides=gold_overrides))
        for k in ks
    ]


def run_margin_sweep(corpora, provider, trainer_config: TrainerConfig,
                     margins=DEFAULT_MARGINS, k: int = 25) -> list[SweepRow]:
    """Train one head per margin per corpus and score retrieval at fixed k.

    corpora: mapping corpus_name -> (records, schemas).
    """
    rows = []
    for name, (records, schemas) in corpora.items():
        for margin in margins:
            cfg = replace(trainer_config, margin=margin)
            result = train_head_on_corpus(records, schemas, provider, cfg)
            metrics = retrieval_quality(records, schemas, provider, result.head, k)
            rows.append(_row(name, f"margin={margin:g}", margin, None, k, metrics))
    return rows


def run_neg_limit_sweep(corpus_name, records, schemas, provider,
                        trainer_config: TrainerConfig,
                        neg_limits=DEFAULT_NEG_LIMITS,
                        ks=DEFAULT_KS) -> list[SweepRow]:
    """Train one head per negative-sample limit and score across k."""
    rows = []
    for limit in neg_limits:
        cfg = replace(trainer_config, negatives_per_query=limit)
        result = train_head_on_corpus(records, schemas, provider, cfg)
        for k in ks:
            metrics = retrieval_quality(records, schemas, provider, result.head, k)
            rows.append(_row(corpus_name, f"neg_limit={limit}", None, limit, k, metrics))
    return rows


# --- ablation ----------------------------------------------------------------

@dataclass(frozen=True)
class AblationRow:
    name: str
    retriever: bool
    tuned_generator: bool
    correction: bool
    ex: float
    n_questions: int

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "retriever": self.retriever,
            "tuned_generator": self.tuned_generator,
            "correction": self.correction,
            "ex": self.ex,
            "n_questions": self.n_questions,
        }


def run_ablation(corpus, runtime_for_plan, max_iterations: int = 3,
                 parallelism: int = 1) -> list[AblationRow]:
    """Grid of retriever / generator-quality / correction configurations.

    runtime_for_plan: callable plan_name in {"weak", "strong"} -> EngineRuntime.
    Generator quality stands in for generator fine-tuning: scripted plans of
    differing quality replace weight updates at desk scale.
    """
    grid = [
        ("baseline", False, "weak", 0),
        ("retriever", True, "weak", 0),
        ("retriever+tuned", True, "strong", 0),
        ("retriever+correction", True, "weak", max_iterations),
        ("retriever+tuned+correction", True, "strong", max_iterations),
    ]
    runtimes = {name: runtime_for_plan(name) for name in ("weak", "strong")}
    rows = []
    for name, retrieval, plan, budget in grid:
        _traces, summary = runtimes[plan].run(
            corpus, parallelism=parallelism,
            max_iterations=budget, retrieval_enabled=retrieval,
        )
        rows.append(AblationRow(
            name=name,
            retriever=retrieval,
            tuned_generator=plan == "strong",
            correction=budget > 0,
            ex=summary.ex if summary.ex is not None else 0.0,
            n_questions=summary.n_questions,
        ))
    return rows
