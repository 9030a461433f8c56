import json

import pytest

from squill.corpus import (
    OverlayEntry,
    QuestionRecord,
    convert_bird_descriptions,
    load_corpus,
    load_overlay,
    render_query_text,
    save_corpus,
    subsample_corpus,
)
from squill.errors import CorpusError


def write_corpus(path, records):
    path.write_text(json.dumps(records), encoding="utf-8")
    return path


def test_load_preserves_order_and_fields(tmp_path):
    path = write_corpus(tmp_path / "c.json", [
        {"question_id": "q1", "db_id": "d", "question": "one?",
         "evidence": "ev", "SQL": "SELECT 1", "difficulty": "simple"},
        {"question_id": "q2", "db_id": "d", "question": "two?"},
    ])
    records = load_corpus(path)
    assert [r.question_id for r in records] == ["q1", "q2"]
    assert records[0].evidence == "ev"
    assert records[0].gold_sql == "SELECT 1"
    assert records[0].difficulty == "simple"


def test_missing_evidence_is_absent(tmp_path):
    path = write_corpus(tmp_path / "c.json",
                        [{"question_id": "q1", "db_id": "d", "question": "x?"}])
    assert load_corpus(path)[0].evidence is None


def test_duplicate_question_id_rejected(tmp_path):
    path = write_corpus(tmp_path / "c.json", [
        {"question_id": "q1", "db_id": "d", "question": "a?"},
        {"question_id": "q1", "db_id": "d", "question": "b?"},
    ])
    with pytest.raises(CorpusError, match="q1"):
        load_corpus(path)


def test_malformed_json_names_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('[{"question_id": "q1",\n  "db_id": }]', encoding="utf-8")
    with pytest.raises(CorpusError, match="line 2"):
        load_corpus(path)


def test_missing_question_field_names_record(tmp_path):
    path = write_corpus(tmp_path / "c.json", [{"question_id": "q1", "db_id": "d"}])
    with pytest.raises(CorpusError, match="record 0.*question"):
        load_corpus(path)


def test_field_aliases_accepted(tmp_path):
    path = write_corpus(tmp_path / "c.json", [
        {"db_id": "d", "question": "spider style?", "query": "SELECT 2",
         "external_knowledge": "hint"},
    ])
    rec = load_corpus(path)[0]
    assert rec.gold_sql == "SELECT 2"
    assert rec.evidence == "hint"
    assert rec.question_id == "q0"  # synthesized from position


def test_jsonl_accepted(tmp_path):
    path = tmp_path / "c.jsonl"
    path.write_text('{"question_id": "a", "db_id": "d", "question": "x?"}\n'
                    '{"question_id": "b", "db_id": "d", "question": "y?"}\n',
                    encoding="utf-8")
    assert [r.question_id for r in load_corpus(path)] == ["a", "b"]


def test_save_load_round_trip(tmp_path):
    records = [QuestionRecord("q1", "d", "x?", evidence="e", gold_sql="SELECT 1",
                              difficulty="hard"),
               QuestionRecord("q2", "d", "y?")]
    path = tmp_path / "c.json"
    save_corpus(records, path)
    assert load_corpus(path) == records


class TestRenderQueryText:
    def test_question_with_evidence(self):
        q = QuestionRecord("q1", "d", "How many?", evidence="A hint.")
        text = render_query_text(q)
        instruct, query = text.split("\n")
        assert instruct.startswith("Instruct:Given a natural language question")
        assert query == "Query:How many? A hint."

    def test_no_evidence_omits_separator_space(self):
        q = QuestionRecord("q1", "d", "How many?")
        assert render_query_text(q).endswith("Query:How many?")

    def test_empty_question_rejected(self):
        with pytest.raises(CorpusError):
            render_query_text(QuestionRecord("q1", "d", "   "))

    def test_deterministic(self):
        q = QuestionRecord("q1", "d", "Same?", evidence="ev")
        assert render_query_text(q) == render_query_text(q)


def test_overlay_round_trip(tmp_path):
    path = tmp_path / "o.json"
    path.write_text(json.dumps([
        {"table": "disp", "column": "disp_id",
         "column_description": "unique number", "value_description": "disposition id"},
        {"table": "disp", "column": "type"},
    ]), encoding="utf-8")
    entries = load_overlay(path)
    assert entries[0] == OverlayEntry("disp", "disp_id", "unique number", "disposition id")
    assert entries[1].column_description is None


def test_convert_bird_descriptions(tmp_path):
    desc = tmp_path / "database_description"
    desc.mkdir()
    (desc / "disp.csv").write_text(
        "original_column_name,column_name,column_description,data_format,value_description\n"
        'disp_id,disposition id,unique number of identifying this row of record,integer,\n'
        "type,,,,\n",
        encoding="utf-8")
    entries = convert_bird_descriptions(desc)
    assert len(entries) == 1
    assert entries[0].table == "disp"
    assert entries[0].column == "disp_id"
    assert entries[0].column_description.startswith("unique number")


def test_subsample_is_per_database_and_seeded():
    records = [QuestionRecord(f"q{i}", f"db{i % 4}", "x?") for i in range(40)]
    sampled = subsample_corpus(records, 0.2, seed=1)
    again = subsample_corpus(records, 0.2, seed=1)
    assert sampled == again
    by_db = {}
    for r in sampled:
        by_db.setdefault(r.db_id, 0)
        by_db[r.db_id] += 1
    assert set(by_db) == {"db0", "db1", "db2", "db3"}
    assert all(count == 2 for count in by_db.values())
