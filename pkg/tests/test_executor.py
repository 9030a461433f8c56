import hashlib

import pytest

from squill.executor import (
    NO_SUCH_COLUMN,
    NO_SUCH_TABLE,
    OTHER_ERROR,
    SYNTAX_ERROR,
    classify_error,
    execute_sql,
    execution_accuracy,
    results_match,
)


class TestExecute:
    def test_select_constant(self, demo_db):
        out = execute_sql(demo_db, "SELECT 42")
        assert out.ok
        assert out.rows == ((42,),)

    def test_syntax_error_message_verbatim(self, demo_db):
        out = execute_sql(demo_db, "SELEC 1")
        assert out.status == "failure"
        assert "syntax error" in out.error_message
        assert out.error_category == SYNTAX_ERROR

    def test_unknown_column(self, demo_db):
        out = execute_sql(demo_db, "SELECT ghost FROM disp")
        assert out.error_category == NO_SUCH_COLUMN

    def test_unknown_table(self, demo_db):
        out = execute_sql(demo_db, "SELECT * FROM ghost_table")
        assert out.error_category == NO_SUCH_TABLE

    def test_timeout_on_runaway_query(self, demo_db):
        sql = ("WITH RECURSIVE r(n) AS (SELECT 1 UNION ALL SELECT n + 1 FROM r) "
               "SELECT count(*) FROM r")
        out = execute_sql(demo_db, sql, timeout=0.5)
        assert out.status == "timeout"
        assert out.error_category == OTHER_ERROR
        assert out.elapsed >= 0.5

    def test_write_statement_rejected_as_other(self, demo_db):
        out = execute_sql(demo_db, "INSERT INTO disp VALUES (99, 'X')")
        assert out.status == "failure"
        assert out.error_category == OTHER_ERROR

    def test_database_file_never_mutated(self, demo_db):
        before = hashlib.sha256(demo_db.read_bytes()).hexdigest()
        execute_sql(demo_db, "SELECT * FROM disp")
        execute_sql(demo_db, "INSERT INTO disp VALUES (99, 'X')")
        execute_sql(demo_db, "DROP TABLE disp")
        after = hashlib.sha256(demo_db.read_bytes()).hexdigest()
        assert before == after

    def test_empty_sql_rejected(self, demo_db):
        with pytest.raises(ValueError):
            execute_sql(demo_db, "   ")

    def test_success_invariants(self, demo_db):
        out = execute_sql(demo_db, "SELECT type FROM disp WHERE disp_id = 900")
        assert out.ok and out.rows == () and out.error_message is None


class TestClassify:
    @pytest.mark.parametrize("message,expected", [
        ("no such column: frpm.cds", NO_SUCH_COLUMN),
        ('near "SELEC": syntax error', SYNTAX_ERROR),
        ("no such table: schools", NO_SUCH_TABLE),
        ("database is locked", OTHER_ERROR),
        ("NO SUCH COLUMN: Weird.Case", NO_SUCH_COLUMN),
    ])
    def test_mapping(self, message, expected):
        assert classify_error(message) == expected

    def test_column_rule_precedes_syntax_rule(self):
        assert classify_error("syntax error: no such column x") == NO_SUCH_COLUMN
        assert classify_error("syntax error near no such table y") == NO_SUCH_TABLE

    def test_total_over_arbitrary_messages(self):
        for message in ("", " "):
            with pytest.raises(ValueError):
                classify_error(message)
        assert classify_error("???") == OTHER_ERROR


class TestResultsMatch:
    def test_row_order_insensitive(self):
        assert results_match([(1, "a"), (2, "b")], [(2, "b"), (1, "a")])

    def test_multiset_multiplicity_matters(self):
        assert not results_match([(1, "a")], [(1, "a"), (1, "a")])

    def test_integral_float_unifies_with_int(self):
        assert results_match([(1,)], [(1.0,)])
        assert not results_match([(1,)], [(1.5,)])

    def test_column_order_within_row_significant(self):
        assert not results_match([(1, 2)], [(2, 1)])

    def test_null_distinct_from_empty_text(self):
        assert not results_match([(None,)], [("",)])
        assert results_match([(None,)], [(None,)])

    def test_set_semantics_flag(self):
        assert results_match([(1,), (1,)], [(1,)], set_semantics=True)
        assert not results_match([(1,), (1,)], [(1,)])

    def test_float_tolerance_flag(self):
        assert results_match([(0.30000001,)], [(0.3,)], float_tol=1e-6)
        assert not results_match([(0.30000001,)], [(0.3,)])

    def test_equivalence_relation_properties(self):
        rows = [[(1, "a"), (2.0, None)], [(2, None), (1.0, "a")], [(1, "a"), (2, None)]]
        for a in rows:
            assert results_match(a, a)
        for a in rows:
            for b in rows:
                assert results_match(a, b) == results_match(b, a)
        # transitivity on this fixture: all three are pairwise equal
        assert results_match(rows[0], rows[1]) and results_match(rows[1], rows[2])
        assert results_match(rows[0], rows[2])


class TestExecutionAccuracy:
    def test_identical_predictions_score_one(self, demo_db):
        golds = {"q1": "SELECT disp_id FROM disp", "q2": "SELECT type FROM disp"}
        ex, details = execution_accuracy(dict(golds), golds, lambda q: demo_db)
        assert ex == 1.0
        assert all(d["match"] for d in details.values())

    def test_all_failures_score_zero(self, demo_db):
        preds = {"q1": "SELEC 1", "q2": "SELECT ghost FROM disp"}
        golds = {"q1": "SELECT 1", "q2": "SELECT 2"}
        ex, _details = execution_accuracy(preds, golds, lambda q: demo_db)
        assert ex == 0.0

    def test_three_of_four(self, demo_db):
        golds = {f"q{i}": "SELECT disp_id FROM disp" for i in range(4)}
        preds = dict(golds)
        preds["q3"] = "SELECT card_id FROM card"
        ex, _details = execution_accuracy(preds, golds, lambda q: demo_db)
        assert ex == 0.75

    def test_gold_defect_excluded_with_warning(self, demo_db, caplog):
        import logging
        preds = {"q1": "SELECT 1", "q2": "SELECT disp_id FROM disp"}
        golds = {"q1": "SELECT broken FROM nowhere", "q2": "SELECT disp_id FROM disp"}
        with caplog.at_level(logging.WARNING):
            ex, details = execution_accuracy(preds, golds, lambda q: demo_db)
        assert ex == 1.0  # q1 excluded, q2 matches
        assert details["q1"]["match"] is None
        assert any("gold SQL failed" in m for m in caplog.messages)

    def test_key_mismatch_rejected(self, demo_db):
        with pytest.raises(ValueError):
            execution_accuracy({"a": "SELECT 1"}, {"b": "SELECT 1"}, lambda q: demo_db)
