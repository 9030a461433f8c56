"""SQLite schema introspection and column document rendering.

Databases are always opened read-only. A schema is an ordered list of
column records (table order as introspected, then column ordinal), plus
the foreign-key edges between them.
"""

from __future__ import annotations

import logging
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

from .errors import SchemaError

log = logging.getLogger(__name__)

SAMPLE_VALUE_LIMIT = 2


class ColumnRef(NamedTuple):
    db_id: str
    table_name: str
    column_name: str

    def normalized(self) -> "ColumnRef":
        return ColumnRef(self.db_id, self.table_name.lower(), self.column_name.lower())

    def dotted(self) -> str:
        return f"{self.table_name}.{self.column_name}"


@dataclass(frozen=True)
class ColumnRecord:
    """One physical column with the metadata used for retrieval and prompts."""

    db_id: str
    table_name: str
    column_name: str
    data_type: str = ""
    is_primary_key: bool = False
    foreign_keys: tuple[tuple[str, str], ...] = ()
    column_description: str | None = None
    value_description: str | None = None
    sample_values: tuple = ()

    @property
    def ref(self) -> ColumnRef:
        return ColumnRef(self.db_id, self.table_name, self.column_name)


@dataclass(frozen=True)
class DatabaseSchema:
    """Ordered column records plus foreign-key edges for one database."""

    db_id: str
    columns: tuple[ColumnRecord, ...]
    foreign_key_edges: tuple[tuple[ColumnRef, ColumnRef], ...] = ()
    _by_ref: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        by_ref = {}
        for col in self.columns:
            key = col.ref.normalized()
            if key in by_ref:
                raise SchemaError(f"duplicate column {col.ref.dotted()} in {self.db_id}")
            by_ref[key] = col
        for a, b in self.foreign_key_edges:
            for end in (a, b):
                if end.normalized() not in by_ref:
                    raise SchemaError(
                        f"foreign key endpoint {end.dotted()} not a column of {self.db_id}"
                    )
        object.__setattr__(self, "_by_ref", by_ref)

    def column(self, table_name: str, column_name: str) -> ColumnRecord | None:
        return self._by_ref.get(ColumnRef(self.db_id, table_name, column_name).normalized())

    def resolve(self, ref: ColumnRef) -> ColumnRecord | None:
        return self._by_ref.get(ref.normalized())

    def table_names(self) -> list[str]:
        names = []
        for col in self.columns:
            if col.table_name not in names:
                names.append(col.table_name)
        return names


def _quote_ident(name: str) -> str:
    return '"' + name.replace('"', '""') + '"'


def _sample_values(conn, table: str, column: str) -> tuple:
    """First ``SAMPLE_VALUE_LIMIT`` distinct non-null values in rowid order."""
    sql = (
        f"SELECT {_quote_ident(column)} FROM {_quote_ident(table)} "
        f"WHERE {_quote_ident(column)} IS NOT NULL ORDER BY rowid"
    )
    try:
        cursor = conn.execute(sql)
    except sqlite3.OperationalError:
        # WITHOUT ROWID tables: fall back to natural order.
        cursor = conn.execute(
            f"SELECT {_quote_ident(column)} FROM {_quote_ident(table)} "
            f"WHERE {_quote_ident(column)} IS NOT NULL"
        )
    values = []
    for (value,) in cursor:
        if value not in values:
            values.append(value)
            if len(values) >= SAMPLE_VALUE_LIMIT:
                break
    return tuple(values)


def introspect_schema(db_path, db_id: str | None = None, overlay=None) -> DatabaseSchema:
    """Build a DatabaseSchema from a SQLite file.

    Args:
        db_path: path to the database file (opened read-only).
        db_id: logical database id; defaults to the file stem.
        overlay: optional iterable of OverlayEntry with descriptions to merge
            by (table, column). Entries naming unknown columns are skipped
            with a warning.
    """
    db_path = Path(db_path)
    if db_id is None:
        db_id = db_path.stem
    uri = f"file:{db_path}?mode=ro"
    conn = sqlite3.connect(uri, uri=True)
    try:
        tables = [
            row[0]
            for row in conn.execute(
                "SELECT name FROM sqlite_master WHERE type='table' "
                "AND name NOT LIKE 'sqlite_%' ORDER BY rowid"
            )
        ]

        descriptions = {}
        for entry in overlay or ():
            descriptions[(entry.table.lower(), entry.column.lower())] = entry

        columns: list[ColumnRecord] = []
        fk_by_column: dict[tuple[str, str], list[tuple[str, str]]] = {}
        raw_edges: list[tuple[tuple[str, str], tuple[str, str]]] = []
        for table in tables:
            pk_of: dict[str, str] = {}
            info = list(conn.execute(f"PRAGMA table_info({_quote_ident(table)})"))
            for fk in conn.execute(f"PRAGMA foreign_key_list({_quote_ident(table)})"):
                target_table, from_col, to_col = fk[2], fk[3], fk[4]
                if to_col is None:
                    to_col = pk_of.get(target_table) or _primary_key_of(conn, target_table)
                    if to_col is None:
                        log.warning(
                            "%s: foreign key %s.%s -> %s has no resolvable target column",
                            db_id, table, from_col, target_table,
                        )
                        continue
                fk_by_column.setdefault((table, from_col), []).append((target_table, to_col))
                raw_edges.append(((table, from_col), (target_table, to_col)))
            for _cid, name, data_type, _notnull, _default, pk in info:
                entry = descriptions.get((table.lower(), name.lower()))
                columns.append(
                    ColumnRecord(
                        db_id=db_id,
                        table_name=table,
                        column_name=name,
                        data_type=data_type or "",
                        is_primary_key=bool(pk),
                        foreign_keys=tuple(fk_by_column.get((table, name), ())),
                        column_description=entry.column_description if entry else None,
                        value_description=entry.value_description if entry else None,
                        sample_values=_sample_values(conn, table, name),
                    )
                )

        known = {(c.table_name.lower(), c.column_name.lower()) for c in columns}
        for key, entry in descriptions.items():
            if key not in known:
                log.warning(
                    "%s: overlay entry %s.%s does not match a column; skipped",
                    db_id, entry.table, entry.column,
                )

        edges = []
        for (ft, fc), (tt, tc) in raw_edges:
            src = ColumnRef(db_id, ft, fc)
            dst = ColumnRef(db_id, tt, tc)
            if (tt.lower(), tc.lower()) not in known or (ft.lower(), fc.lower()) not in known:
                log.warning("%s: dropping foreign key %s -> %s (unknown endpoint)",
                            db_id, src.dotted(), dst.dotted())
                continue
            edges.append((src, dst))
        return DatabaseSchema(db_id=db_id, columns=tuple(columns),
                              foreign_key_edges=tuple(edges))
    finally:
        conn.close()


def _primary_key_of(conn, table: str) -> str | None:
    for _cid, name, _type, _notnull, _default, pk in conn.execute(
        f"PRAGMA table_info({_quote_ident(table)})"
    ):
        if pk:
            return name
    return None


def render_column_document(col: ColumnRecord) -> str:
    """Render the retrieval document for a column.

    Layout: ``table:`` and ``column:`` lines always, then ``column_desc:``
    and ``value_desc:`` lines only when the field is present. Line endings
    are ``\\n``; output is byte-stable for identical inputs.
    """
    lines = [f"table:{col.table_name}", f"column:{col.column_name}"]
    if col.column_description:
        lines.append(f"column_desc:{col.column_description}")
    if col.value_description:
        lines.append(f"value_desc:{col.value_description}")
    return "\n".join(lines)
