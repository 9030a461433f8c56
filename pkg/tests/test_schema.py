import logging

import pytest

from squill.corpus import OverlayEntry
from squill.errors import SchemaError
from squill.schema import (
    ColumnRecord,
    ColumnRef,
    DatabaseSchema,
    introspect_schema,
    render_column_document,
)


def test_introspect_columns_and_keys(demo_db):
    schema = introspect_schema(demo_db, db_id="demo")
    names = [(c.table_name, c.column_name) for c in schema.columns]
    assert names == [("disp", "disp_id"), ("disp", "type"),
                     ("card", "card_id"), ("card", "disp_id")]
    disp_id = schema.column("disp", "disp_id")
    assert disp_id.is_primary_key
    assert disp_id.data_type == "INTEGER"
    # first two distinct values in rowid order (disp_id aliases the rowid,
    # so ascending rowid is 2, 5, 9 regardless of insertion order)
    assert disp_id.sample_values == (2, 5)
    assert schema.column("disp", "type").sample_values == ("DISPONENT", "OWNER")


def test_foreign_key_edge_resolves_both_ways(demo_db):
    schema = introspect_schema(demo_db, db_id="demo")
    assert len(schema.foreign_key_edges) == 1
    src, dst = schema.foreign_key_edges[0]
    assert (src.table_name, src.column_name) == ("card", "disp_id")
    assert (dst.table_name, dst.column_name) == ("disp", "disp_id")
    assert schema.resolve(src) is not None
    assert schema.resolve(dst) is not None


def test_empty_table_has_no_sample_values(tmp_path):
    import sqlite3
    path = tmp_path / "empty.sqlite"
    conn = sqlite3.connect(path)
    conn.execute("CREATE TABLE t (a INTEGER)")
    conn.commit()
    conn.close()
    schema = introspect_schema(path)
    assert schema.columns[0].sample_values == ()


def test_introspection_is_deterministic(demo_db):
    assert introspect_schema(demo_db, db_id="demo") == introspect_schema(demo_db, db_id="demo")


def test_overlay_merges_by_table_and_column(demo_db):
    overlay = [
        OverlayEntry("disp", "disp_id", "unique number", "disposition id"),
        OverlayEntry("DISP", "TYPE", "owner or disponent", None),
    ]
    schema = introspect_schema(demo_db, db_id="demo", overlay=overlay)
    assert schema.column("disp", "disp_id").column_description == "unique number"
    assert schema.column("disp", "type").column_description == "owner or disponent"


def test_overlay_unknown_column_skipped_with_warning(demo_db, caplog):
    overlay = [OverlayEntry("disp", "nope", "ghost", None)]
    with caplog.at_level(logging.WARNING):
        schema = introspect_schema(demo_db, db_id="demo", overlay=overlay)
    assert any("nope" in message for message in caplog.messages)
    assert schema.column("disp", "nope") is None


def test_duplicate_column_rejected():
    col = ColumnRecord(db_id="d", table_name="t", column_name="a")
    with pytest.raises(SchemaError):
        DatabaseSchema(db_id="d", columns=(col, col))


def test_dangling_foreign_key_rejected():
    col = ColumnRecord(db_id="d", table_name="t", column_name="a")
    edge = (ColumnRef("d", "t", "a"), ColumnRef("d", "x", "y"))
    with pytest.raises(SchemaError):
        DatabaseSchema(db_id="d", columns=(col,), foreign_key_edges=(edge,))


class TestColumnDocument:
    def test_full_record_renders_four_lines(self):
        col = ColumnRecord(
            db_id="d", table_name="disp", column_name="disp_id",
            column_description="unique number of identifying this row of record",
            value_description="disposition id",
        )
        assert render_column_document(col) == (
            "table:disp\n"
            "column:disp_id\n"
            "column_desc:unique number of identifying this row of record\n"
            "value_desc:disposition id"
        )

    def test_missing_descriptions_render_two_lines(self):
        col = ColumnRecord(db_id="d", table_name="disp", column_name="type")
        assert render_column_document(col) == "table:disp\ncolumn:type"

    def test_byte_stable(self):
        col = ColumnRecord(db_id="d", table_name="t", column_name="c",
                           column_description="desc")
        assert render_column_document(col) == render_column_document(col)
