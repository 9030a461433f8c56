"""Builds contrastive training examples from a corpus and trains the head.

For every (question, gold column) pair one example is emitted: the rendered
query text as the anchor, the gold column's document as the positive, and
the most question-similar irrelevant columns (by base embeddings) as the
negatives. Gold columns come from resolving the gold SQL against the
schema, with an optional per-question override map.
"""

from __future__ import annotations

import logging

import numpy as np

from .contrastive import (
    BatchItem,
    ContrastiveBatch,
    DEFAULT_NEGATIVES,
    TrainerConfig,
    TrainingExample,
    TrainingResult,
    sample_negatives,
    train_projection,
)
from .corpus import render_query_text
from .retriever import gold_columns_from_sql
from .schema import render_column_document

log = logging.getLogger(__name__)


def gold_columns_for_corpus(records, schemas, overrides=None) -> dict:
    """question_id -> set of gold ColumnRefs; questions without gold are omitted."""
    overrides = overrides or {}
    gold = {}
    for q in records:
        if q.question_id in overrides:
            refs = frozenset(overrides[q.question_id])
        elif q.gold_sql:
            schema = schemas[q.db_id]
            refs = gold_columns_from_sql(q.gold_sql, schema)
        else:
            refs = frozenset()
        if refs:
            gold[q.question_id] = refs
        else:
            log.warning("question %s: no gold columns resolved; skipped", q.question_id)
    return gold


def build_training_examples(records, schemas, provider,
                            negatives_per_query: int = DEFAULT_NEGATIVES,
                            gold_overrides=None) -> list[TrainingExample]:
    """One (query, positive, negatives) text triple per gold column."""
    gold_map = gold_columns_for_corpus(records, schemas, overrides=gold_overrides)
    doc_cache: dict[str, list[str]] = {}
    doc_vec_cache: dict[str, object] = {}
    examples: list[TrainingExample] = []
    for q in records:
        refs = gold_map.get(q.question_id)
        if not refs:
            continue
        schema = schemas[q.db_id]
        if q.db_id not in doc_cache:
            doc_cache[q.db_id] = [render_column_document(c) for c in schema.columns]
            doc_vec_cache[q.db_id] = provider.embed_texts(doc_cache[q.db_id])
        documents = doc_cache[q.db_id]
        doc_vectors = doc_vec_cache[q.db_id]
        query_text = render_query_text(q)
        query_vector = provider.embed_texts([query_text])[0]
        base_sims = doc_vectors @ query_vector
        negatives = sample_negatives(q, refs, schema, base_sims,
                                     limit=negatives_per_query)
        negative_docs = tuple(render_column_document(c) for c in negatives)
        index_of = {col.ref.normalized(): i for i, col in enumerate(schema.columns)}
        for ref in sorted(refs, key=lambda r: index_of[r.normalized()]):
            positive = documents[index_of[ref.normalized()]]
            examples.append(TrainingExample(query_text, positive, negative_docs))
    return examples


def train_head_on_corpus(records, schemas, provider,
                         config: TrainerConfig = TrainerConfig(),
                         gold_overrides=None) -> TrainingResult:
    examples = build_training_examples(
        records, schemas, provider,
        negatives_per_query=config.negatives_per_query,
        gold_overrides=gold_overrides,
    )
    return train_projection(examples, provider, config)


def corpus_loss(examples, provider, head, config: TrainerConfig = TrainerConfig()) -> float:
    """Objective value over a whole example set for a fixed head."""
    from .contrastive import hn_supcon_loss, supcon_loss

    texts = sorted({t for ex in examples
                    for t in (ex.query_text, ex.positive_text, *ex.negative_texts)})
    vectors = dict(zip(texts, provider.embed_texts(texts)))
    if head is not None:
        for text in texts:
            vectors[text] = head.apply(vectors[text])
    dim = len(next(iter(vectors.values())))
    items = [
        BatchItem(
            vectors[ex.query_text],
            vectors[ex.positive_text],
            np.stack([vectors[t] for t in ex.negative_texts])
            if ex.negative_texts else np.zeros((0, dim)),
        )
        for ex in examples
    ]
    batch = ContrastiveBatch(items, tau=config.tau, margin=config.margin)
    loss_fn = hn_supcon_loss if config.objective == "hn-supcon" else supcon_loss
    return loss_fn(batch)
