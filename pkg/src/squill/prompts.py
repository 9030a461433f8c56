"""Byte-exact SQL-generation prompt construction with schema padding.

Prompts are pure functions of the generation context, so identical inputs
yield identical bytes (golden-file tested). Training contexts pad the gold
columns with seeded random irrelevant columns up to a fixed ``k``, mirroring
what inference sees from top-k retrieval; inference contexts use the
retrieved columns verbatim in rank order.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .schema import ColumnRecord, ColumnRef, DatabaseSchema


@dataclass(frozen=True)
class GenerationContext:
    """Inputs to one generation call: question, schema slice, optional failure."""

    question: str
    schema_slice: tuple[ColumnRecord, ...]
    foreign_key_edges: tuple[tuple[ColumnRef, ColumnRef], ...] = ()
    evidence: str | None = None
    failed_sql: str | None = None
    error_message: str | None = None
    k: int = 25

    def __post_init__(self):
        if (self.failed_sql is None) != (self.error_message is None):
            raise ValueError("failed_sql and error_message must be present together")
        if len(self.schema_slice) > self.k:
            raise ValueError(f"schema slice has {len(self.schema_slice)} columns, k={self.k}")


def make_context(question: str, columns, schema: DatabaseSchema, k: int,
                 evidence: str | None = None, failed_sql: str | None = None,
                 error_message: str | None = None) -> GenerationContext:
    """Assemble a context, carrying over the schema's foreign-key edges."""
    return GenerationContext(
        question=question,
        schema_slice=tuple(columns),
        foreign_key_edges=schema.foreign_key_edges,
        evidence=evidence,
        failed_sql=failed_sql,
        error_message=error_message,
        k=k,
    )


def pad_schema_to_k(columns, schema: DatabaseSchema, k: int, seed: int = 0) -> list[ColumnRecord]:
    """Pad a column list with sampled irrelevant columns up to length k.

    Input columns are always retained (truncated by rank only when the input
    already exceeds k). Padding samples uniformly without replacement from
    the rest of the schema; the padded result is returned in schema column
    order, while an over-length input keeps its rank order.
    """
    columns = list(columns)
    chosen = {col.ref.normalized() for col in columns}
    for col in columns:
        if schema.resolve(col.ref) is None:
            raise ValueError(f"column {col.ref.dotted()} not in schema {schema.db_id}")
    if len(columns) >= k:
        return columns[:k]
    pool = [col for col in schema.columns if col.ref.normalized() not in chosen]
    rng = random.Random(seed)
    extra = rng.sample(pool, min(k - len(columns), len(pool)))
    keep = chosen | {col.ref.normalized() for col in extra}
    return [col for col in schema.columns if col.ref.normalized() in keep]


def _render_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return json.dumps(value)
    if isinstance(value, bytes):
        return json.dumps(value.hex())
    return json.dumps(str(value))


def render_column_entry(col: ColumnRecord) -> str:
    """One ``table.column = { ... }`` schema entry.

    Keys appear in the fixed order type, primary_key, values, description,
    comment; absent metadata fields are omitted.
    """
    parts = []
    if col.data_type:
        parts.append(f'  "type": {json.dumps(col.data_type.lower())}')
    parts.append(f'  "primary_key": {"true" if col.is_primary_key else "false"}')
    if col.sample_values:
        rendered = ", ".join(_render_value(v) for v in col.sample_values)
        parts.append(f'  "values": [{rendered}]')
    if col.column_description:
        parts.append(f'  "description": {json.dumps(col.column_description)}')
    if col.value_description:
        parts.append(f'  "comment": {json.dumps(col.value_description)}')
    body = ",\n".join(parts)
    return f"{col.table_name}.{col.column_name} = {{\n{body}\n}}"


def _sft_body(ctx: GenerationContext) -> str:
    entries = "\n".join(render_column_entry(col) for col in ctx.schema_slice)
    in_slice = {col.ref.normalized() for col in ctx.schema_slice}
    fk_lines = [
        f"{a.table_name}.{a.column_name} = {b.table_name}.{b.column_name}"
        for a, b in ctx.foreign_key_edges
        if a.normalized() in in_slice and b.normalized() in in_slice
    ]
    text = (
        f"### Question\n{ctx.question}\n\n"
        f"### Database\n-- Tables and Columns\n{entries}\n\n"
        f"-- Foreign Keys"
    )
    if fk_lines:
        text += "\n" + "\n".join(fk_lines)
    if ctx.evidence:
        text += f"\n\n-- Evidence\n{ctx.evidence}"
    return text


def build_sft_prompt(ctx: GenerationContext) -> str:
    """First-pass generation prompt: question, schema slice, foreign keys, evidence."""
    if not ctx.schema_slice:
        raise ValueError("schema slice must be non-empty")
    if ctx.failed_sql is not None:
        raise ValueError("context carries failure fields; use build_rft_prompt")
    return _sft_body(ctx)


def build_rft_prompt(ctx: GenerationContext) -> str:
    """Correction prompt: the first-pass prompt, the failed SQL, the error message."""
    if not ctx.schema_slice:
        raise ValueError("schema slice must be non-empty")
    if ctx.failed_sql is None or ctx.error_message is None:
        raise ValueError("correction prompt requires failed_sql and error_message")
    return f"{_sft_body(ctx)}\n\n{ctx.failed_sql}\n\n### Error Message\n{ctx.error_message}"


# --- dataset exports --------------------------------------------------------

def write_sft_dataset(records, path) -> int:
    """Write {"prompt", "completion"} JSON lines. Returns the record count."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for prompt, completion in records:
            fh.write(json.dumps({"prompt": prompt, "completion": completion},
                                ensure_ascii=False) + "\n")
            n += 1
    return n


def write_dpo_dataset(pairs, path) -> int:
    """Write {"prompt", "chosen", "rejected", "provenance"} JSON lines."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(json.dumps({
                "prompt": pair.prompt,
                "chosen": pair.chosen,
                "rejected": pair.rejected,
                "provenance": pair.provenance,
            }, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_dpo_dataset(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rows.append(json.loads(line))
    return rows
