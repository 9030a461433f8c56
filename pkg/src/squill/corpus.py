"""Benchmark corpus loading, description overlays, and query text rendering.

The corpus file is a JSON array of records with fields ``question_id``,
``db_id``, ``question`` and optional ``evidence``, ``SQL``, ``difficulty``.
Field names used by the common benchmark releases are accepted via aliases
(``query`` for the gold SQL, ``external_knowledge`` for evidence, ...).
A JSON-lines file with one record per line is accepted as well.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .errors import CorpusError

log = logging.getLogger(__name__)

_ID_KEYS = ("question_id", "id")
_SQL_KEYS = ("SQL", "sql", "query", "gold_sql")
_EVIDENCE_KEYS = ("evidence", "external_knowledge")

# Text prepended to every retrieval query.
QUERY_INSTRUCTION = (
    "Given a natural language question, retrieve database column information "
    "passages used to generate SQL."
)


@dataclass(frozen=True)
class QuestionRecord:
    """One benchmark question, optionally with evidence and gold SQL."""

    question_id: str
    db_id: str
    question: str
    evidence: str | None = None
    gold_sql: str | None = None
    difficulty: str | None = None


def _first_key(record: dict, keys) -> object:
    for key in keys:
        if key in record and record[key] not in (None, ""):
            return record[key]
    return None


def _parse_record(raw: dict, position: int) -> QuestionRecord:
    if not isinstance(raw, dict):
        raise CorpusError(f"record {position}: expected an object, got {type(raw).__name__}")
    db_id = raw.get("db_id")
    if not db_id:
        raise CorpusError(f"record {position}: missing field 'db_id'")
    question = raw.get("question")
    if not question or not str(question).strip():
        raise CorpusError(f"record {position}: field 'question' must be non-empty")
    qid = _first_key(raw, _ID_KEYS)
    if qid is None:
        qid = f"q{position}"
    evidence = _first_key(raw, _EVIDENCE_KEYS)
    gold_sql = _first_key(raw, _SQL_KEYS)
    difficulty = raw.get("difficulty")
    if difficulty is not None:
        difficulty = str(difficulty).strip().lower() or None
    return QuestionRecord(
        question_id=str(qid),
        db_id=str(db_id),
        question=str(question),
        evidence=str(evidence) if evidence is not None else None,
        gold_sql=str(gold_sql) if gold_sql is not None else None,
        difficulty=difficulty,
    )


def load_corpus(path) -> list[QuestionRecord]:
    """Load a corpus file, preserving record order.

    Raises:
        CorpusError: on malformed JSON (naming the line), missing required
            fields (naming the record and field), or duplicate question ids.
    """
    text = Path(path).read_text(encoding="utf-8")
    stripped = text.lstrip()
    try:
        if stripped.startswith("["):
            raw_records = json.loads(text)
        else:
            raw_records = [
                json.loads(line) for line in text.splitlines() if line.strip()
            ]
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw_records, list):
        raise CorpusError(f"{path}: expected an array of records")

    records = [_parse_record(raw, i) for i, raw in enumerate(raw_records)]
    seen: dict[str, int] = {}
    duplicates = []
    for rec in records:
        if rec.question_id in seen:
            duplicates.append(rec.question_id)
        seen[rec.question_id] = 1
    if duplicates:
        raise CorpusError(
            f"{path}: duplicate question_id values: {sorted(set(duplicates))}"
        )
    return records


def save_corpus(records, path) -> None:
    """Write records in the canonical corpus format."""
    payload = []
    for rec in records:
        row = {"question_id": rec.question_id, "db_id": rec.db_id, "question": rec.question}
        if rec.evidence is not None:
            row["evidence"] = rec.evidence
        if rec.gold_sql is not None:
            row["SQL"] = rec.gold_sql
        if rec.difficulty is not None:
            row["difficulty"] = rec.difficulty
        payload.append(row)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def render_query_text(q: QuestionRecord) -> str:
    """Render the retrieval query document for a question.

    The evidence is appended after a single space and omitted, along with
    the space, when absent.
    """
    if not q.question.strip():
        raise CorpusError(f"question {q.question_id!r}: question text must be non-empty")
    body = q.question if not q.evidence else f"{q.question} {q.evidence}"
    return f"Instruct:{QUERY_INSTRUCTION}\nQuery:{body}"


# --- description overlays -------------------------------------------------

@dataclass(frozen=True)
class OverlayEntry:
    table: str
    column: str
    column_description: str | None = None
    value_description: str | None = None


def load_overlay(path) -> list[OverlayEntry]:
    """Load a description overlay: a JSON array of (table, column, desc?) records."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"{path}: malformed JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(raw, list):
        raise CorpusError(f"{path}: expected an array of overlay records")
    entries = []
    for i, row in enumerate(raw):
        table = row.get("table")
        column = row.get("column")
        if not table or not column:
            raise CorpusError(f"{path}: overlay record {i} needs 'table' and 'column'")
        entries.append(
            OverlayEntry(
                table=str(table),
                column=str(column),
                column_description=row.get("column_description") or None,
                value_description=row.get("value_description") or None,
            )
        )
    return entries


def save_overlay(entries, path) -> None:
    payload = []
    for e in entries:
        row = {"table": e.table, "column": e.column}
        if e.column_description:
            row["column_description"] = e.column_description
        if e.value_description:
            row["value_description"] = e.value_description
        payload.append(row)
    Path(path).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def convert_bird_descriptions(description_dir) -> list[OverlayEntry]:
    """Convert a directory of per-table description CSVs into overlay entries.

    Each ``<table>.csv`` is expected to carry ``original_column_name`` plus
    optional ``column_description`` / ``value_description`` columns. Other
    columns are ignored. Encoding oddities in released CSVs are tolerated.
    """
    description_dir = Path(description_dir)
    entries = []
    for csv_path in sorted(description_dir.glob("*.csv")):
        table = csv_path.stem
        with open(csv_path, encoding="utf-8-sig", errors="replace", newline="") as fh:
            for row in csv.DictReader(fh):
                name = (row.get("original_column_name") or "").strip()
                if not name:
                    continue
                col_desc = (row.get("column_description") or "").strip() or None
                val_desc = (row.get("value_description") or "").strip() or None
                if col_desc is None and val_desc is None:
                    continue
                entries.append(
                    OverlayEntry(
                        table=table,
                        column=name,
                        column_description=col_desc,
                        value_description=val_desc,
                    )
                )
    return entries


def subsample_corpus(records, fraction: float, seed: int = 0) -> list[QuestionRecord]:
    """Sample a per-database fraction of questions, keeping corpus order.

    Each database contributes ``ceil(fraction * n)`` of its questions, so
    small databases keep at least one. Deterministic for a given seed.
    """
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    by_db: dict[str, list[int]] = {}
    for i, rec in enumerate(records):
        by_db.setdefault(rec.db_id, []).append(i)
    rng = random.Random(seed)
    keep: set[int] = set()
    for db_id in sorted(by_db):
        indices = by_db[db_id]
        n_take = max(1, math.ceil(fraction * len(indices)))
        keep.update(rng.sample(indices, n_take))
    return [rec for i, rec in enumerate(records) if i in keep]
