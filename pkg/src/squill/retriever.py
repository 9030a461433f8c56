"""Question-to-columns retrieval and retrieval quality metrics.

Metrics are pooled over all (question, column) pairs; macro (per-question
mean) variants are reported alongside since either averaging convention
may be wanted when recomputing published-style tables.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass

from .contrastive import ProjectionHead
from .corpus import QuestionRecord, render_query_text
from .index import SchemaIndex, top_k
from .schema import ColumnRef, DatabaseSchema

log = logging.getLogger(__name__)

DEFAULT_K = 25


@dataclass(frozen=True)
class RetrievalResult:
    question_id: str
    ranked_columns: tuple[tuple[ColumnRef, float], ...]
    k: int

    def refs(self) -> list[ColumnRef]:
        return [ref for ref, _score in self.ranked_columns]


def retrieve_columns(q: QuestionRecord, index: SchemaIndex, provider,
                     head: ProjectionHead | None = None,
                     k: int = DEFAULT_K) -> RetrievalResult:
    """Embed the rendered question and rank index columns by cosine."""
    if q.db_id != index.db_id:
        raise ValueError(
            f"question {q.question_id} targets {q.db_id!r} but index is for {index.db_id!r}"
        )
    vector = provider.embed_texts([render_query_text(q)])[0]
    if head is not None:
        vector = head.apply(vector)
    ranked = top_k(index, vector, k)
    return RetrievalResult(question_id=q.question_id, ranked_columns=tuple(ranked), k=k)


@dataclass(frozen=True)
class QuestionRetrievalStats:
    question_id: str
    n_gold: int
    n_retrieved: int
    n_hit: int
    covered: bool

    @property
    def tpr(self) -> float:
        return self.n_hit / self.n_gold

    @property
    def fpr(self) -> float:
        return (self.n_retrieved - self.n_hit) / self.n_retrieved if self.n_retrieved else 0.0


@dataclass(frozen=True)
class RetrievalMetrics:
    tpr: float
    fpr: float
    slr: float
    macro_tpr: float
    macro_fpr: float
    per_question: tuple[QuestionRetrievalStats, ...]

    def to_dict(self) -> dict:
        return {
            "tpr": self.tpr,
            "fpr": self.fpr,
            "slr": self.slr,
            "macro_tpr": self.macro_tpr,
            "macro_fpr": self.macro_fpr,
            "per_question": [
                {
                    "question_id": s.question_id,
                    "n_gold": s.n_gold,
                    "n_retrieved": s.n_retrieved,
                    "n_hit": s.n_hit,
                    "covered": s.covered,
                    "tpr": s.tpr,
                    "fpr": s.fpr,
                }
                for s in self.per_question
            ],
        }


def compute_retrieval_metrics(results, gold: dict) -> RetrievalMetrics:
    """Pooled TPR/FPR plus per-question coverage (SLR).

    TPR: retrieved gold columns over all gold columns. FPR: retrieved
    non-gold columns over all retrieved columns. SLR: fraction of questions
    whose gold set is fully contained in the retrieved set.
    """
    if not results:
        raise ValueError("no retrieval results to score")
    stats = []
    sum_gold = sum_retrieved = sum_hit = 0
    for result in results:
        if result.question_id not in gold:
            raise ValueError(f"no gold columns for question {result.question_id!r}")
        gold_set = {ref.normalized() for ref in gold[result.question_id]}
        if not gold_set:
            raise ValueError(f"gold column set for {result.question_id!r} is empty")
        retrieved = {ref.normalized() for ref in result.refs()}
        hit = len(retrieved & gold_set)
        stats.append(
            QuestionRetrievalStats(
                question_id=result.question_id,
                n_gold=len(gold_set),
                n_retrieved=len(retrieved),
                n_hit=hit,
                covered=gold_set <= retrieved,
            )
        )
        sum_gold += len(gold_set)
        sum_retrieved += len(retrieved)
        sum_hit += hit
    n = len(stats)
    return RetrievalMetrics(
        tpr=sum_hit / sum_gold,
        fpr=(sum_retrieved - sum_hit) / sum_retrieved if sum_retrieved else 0.0,
        slr=sum(1 for s in stats if s.covered) / n,
        macro_tpr=sum(s.tpr for s in stats) / n,
        macro_fpr=sum(s.fpr for s in stats) / n,
        per_question=tuple(stats),
    )


# --- gold-column extraction from SQL ---------------------------------------

# reserved words only; function names are excluded by the call-paren check,
# since many of them (total, date, max, ...) are legitimate column names
_SQL_KEYWORDS = frozenset(
    """select from where join inner left right full outer cross on and or not
    as group by having order limit offset distinct union all except intersect
    case when then else end in is null like glob between exists asc desc
    cast with values using natural collate escape""".split()
)

_COMMENT_RE = re.compile(r"--[^\n]*|/\*.*?\*/", re.DOTALL)
_STRING_RE = re.compile(r"'(?:[^']|'')*'")
_TOKEN_RE = re.compile(r'"[^"]*"|`[^`]*`|\[[^\]]*\]|[A-Za-z_][A-Za-z0-9_]*|\S')


def _strip_noise(sql: str) -> str:
    return _STRING_RE.sub(" '' ", _COMMENT_RE.sub(" ", sql))


def _unquote(token: str) -> str:
    if len(token) >= 2 and token[0] in '"`' and token[-1] == token[0]:
        return token[1:-1]
    if token.startswith("[") and token.endswith("]"):
        return token[1:-1]
    return token


def _is_identifier(token: str) -> bool:
    return bool(re.match(r'^(?:"|`|\[|[A-Za-z_])', token))


def gold_columns_from_sql(sql: str, schema: DatabaseSchema) -> frozenset[ColumnRef]:
    """Resolve the column identifiers a query references against a schema.

    A lightweight scan, not a full parser: collects table names and aliases
    from FROM/JOIN clauses, then resolves ``alias.column`` / ``table.column``
    pairs and bare column names against the tables in the query (falling
    back to the whole schema). ``SELECT *`` contributes nothing.
    """
    tokens = [_unquote(t) for t in _TOKEN_RE.findall(_strip_noise(sql))]
    tables_lower = {t.lower(): t for t in schema.table_names()}

    aliases: dict[str, str] = {}
    query_tables: list[str] = []

    def note_table(name: str, alias: str | None):
        table = tables_lower.get(name.lower())
        if table is None:
            return
        if table not in query_tables:
            query_tables.append(table)
        aliases[name.lower()] = table
        if alias:
            aliases[alias.lower()] = table

    i = 0
    while i < len(tokens):
        tok = tokens[i].lower()
        if tok in ("from", "join"):
            j = i + 1
            while j < len(tokens) and _is_identifier(tokens[j]):
                name = tokens[j]
                alias = None
                j += 1
                if j < len(tokens) and tokens[j].lower() == "as":
                    j += 1
                if (
                    j < len(tokens)
                    and _is_identifier(tokens[j])
                    and tokens[j].lower() not in _SQL_KEYWORDS
                ):
                    alias = tokens[j]
                    j += 1
                note_table(name, alias)
                if tok == "from" and j < len(tokens) and tokens[j] == ",":
                    j += 1
                    continue
                break
            i = j
        else:
            i += 1

    refs: set[ColumnRef] = set()

    def resolve_bare(name: str):
        pools = query_tables or schema.table_names()
        for table in pools:
            col = schema.column(table, name)
            if col is not None:
                refs.add(col.ref)
                return
        if query_tables:
            for table in schema.table_names():
                col = schema.column(table, name)
                if col is not None:
                    refs.add(col.ref)
                    return

    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if _is_identifier(tok):
            if i + 2 < len(tokens) and tokens[i + 1] == ".":
                qualifier, column = tok, tokens[i + 2]
                table = aliases.get(qualifier.lower()) or tables_lower.get(qualifier.lower())
                if table is not None and _is_identifier(column):
                    col = schema.column(table, column)
                    if col is not None:
                        refs.add(col.ref)
                i += 3
                continue
            lowered = tok.lower()
            prev = tokens[i - 1] if i > 0 else ""
            nxt = tokens[i + 1] if i + 1 < len(tokens) else ""
            if (
                lowered not in _SQL_KEYWORDS
                and lowered not in aliases
                and lowered not in tables_lower
                and prev != "."
                and nxt != "("
            ):
                resolve_bare(tok)
        i += 1
    return frozenset(refs)
