import logging

import numpy as np
import pytest

from squill.contrastive import ProjectionHead
from squill.errors import ContractError, FormatError
from squill.index import (
    IndexEntry,
    brute_force_top_k,
    build_index,
    load_index,
    read_fingerprint,
    save_index,
    top_k,
)
from squill.schema import ColumnRecord, ColumnRef, DatabaseSchema


def schema_with(n, db_id="db"):
    cols = tuple(
        ColumnRecord(db_id=db_id, table_name="t", column_name=f"c{i}",
                     column_description=f"field number {i} niche{i}")
        for i in range(n)
    )
    return DatabaseSchema(db_id=db_id, columns=cols)


def make_index(vectors, db_id="db"):
    from squill.index import SchemaIndex
    entries = tuple(
        IndexEntry(ColumnRef(db_id, "t", f"c{i}"), np.asarray(v, dtype=np.float64), f"doc{i}")
        for i, v in enumerate(vectors)
    )
    return SchemaIndex(db_id=db_id, dim=len(vectors[0]), entries=entries,
                       provider_fingerprint="test")


class TestBuild:
    def test_one_entry_per_column_in_schema_order(self, provider):
        index = build_index(schema_with(7), provider)
        assert len(index.entries) == 7
        assert [e.column_ref.column_name for e in index.entries] == [f"c{i}" for i in range(7)]

    def test_rebuild_identical(self, provider):
        a = build_index(schema_with(5), provider)
        b = build_index(schema_with(5), provider)
        assert a.provider_fingerprint == b.provider_fingerprint
        assert np.array_equal(a.matrix(), b.matrix())

    def test_head_changes_vectors_unless_identity(self, provider):
        schema = schema_with(5)
        base = build_index(schema, provider)
        ident = build_index(schema, provider, ProjectionHead.identity(64))
        assert np.allclose(base.matrix(), ident.matrix())
        assert base.provider_fingerprint != ident.provider_fingerprint
        rng = np.random.default_rng(1)
        rotated = build_index(schema, provider,
                              ProjectionHead(np.eye(64) + 0.3 * rng.normal(size=(64, 64))))
        assert not np.allclose(base.matrix(), rotated.matrix())

    def test_empty_schema_rejected(self, provider):
        with pytest.raises(ValueError):
            build_index(DatabaseSchema(db_id="d", columns=()), provider)


class TestTopK:
    def test_self_similarity_ranks_first(self):
        index = make_index([[1, 0], [0, 1]])
        ranked = top_k(index, np.array([0.0, 1.0]), k=2)
        assert ranked[0][0].column_name == "c1"
        assert ranked[0][1] == pytest.approx(1.0)

    def test_hand_ranking(self):
        index = make_index([[1, 0], [0, 1], [0.6, 0.8]])
        ranked = top_k(index, np.array([1.0, 0.0]), k=2)
        assert [(ref.column_name, round(score, 6)) for ref, score in ranked] == [
            ("c0", 1.0), ("c2", 0.6)]

    def test_k_larger_than_entries_truncates(self):
        index = make_index([[1, 0]] * 20)
        assert len(top_k(index, np.array([1.0, 0.0]), k=25)) == 20

    def test_ties_break_by_column_order(self):
        index = make_index([[0, 1], [1, 0], [1, 0]])
        ranked = top_k(index, np.array([1.0, 0.0]), k=3)
        assert [ref.column_name for ref, _ in ranked] == ["c1", "c2", "c0"]

    def test_dim_mismatch_rejected(self):
        index = make_index([[1, 0]])
        with pytest.raises(ContractError):
            top_k(index, np.array([1.0, 0.0, 0.0]), k=1)
        with pytest.raises(ContractError):
            brute_force_top_k(index.entries, np.array([1.0, 0.0, 0.0]), k=1)

    def test_scores_monotone_down_the_ranking(self):
        rng = np.random.default_rng(2)
        vecs = rng.normal(size=(50, 8))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        index = make_index(list(vecs))
        q = vecs[17]
        ranked = top_k(index, q, k=50)
        scores = [s for _r, s in ranked]
        assert all(a >= b for a, b in zip(scores, scores[1:]))


def assert_same_ranking(fast, oracle):
    """Rankings (refs and tie order) must be identical; scores agree to
    float tolerance, since the matrix product and the per-entry dot may
    round the last bit differently."""
    assert [ref for ref, _s in fast] == [ref for ref, _s in oracle]
    fast_scores = np.array([s for _r, s in fast])
    oracle_scores = np.array([s for _r, s in oracle])
    assert np.allclose(fast_scores, oracle_scores, rtol=1e-12, atol=1e-14)


class TestOracleEquivalence:
    def test_matches_brute_force_with_duplicates(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            n = 40
            vecs = rng.normal(size=(n, 16))
            vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
            vecs[5] = vecs[11]  # engineered tie
            index = make_index(list(vecs))
            q = vecs[rng.integers(n)]
            k = int(rng.integers(1, n + 5))
            assert_same_ranking(top_k(index, q, k),
                                brute_force_top_k(index.entries, q, k))

    def test_full_ranking_when_k_exceeds_entries(self):
        index = make_index([[1, 0], [0, 1]])
        assert len(brute_force_top_k(index.entries, np.array([1.0, 0.0]), 10)) == 2


class TestPersistence:
    def test_round_trip_at_stored_precision(self, tmp_path, provider):
        index = build_index(schema_with(6), provider)
        path = tmp_path / "db.idx"
        save_index(index, path)
        loaded = load_index(path)
        assert loaded.db_id == index.db_id
        assert loaded.provider_fingerprint == index.provider_fingerprint
        assert [e.column_ref for e in loaded.entries] == [e.column_ref for e in index.entries]
        assert [e.document_text for e in loaded.entries] == [e.document_text for e in index.entries]
        stored = index.matrix().astype("<f4").astype(np.float64)
        assert np.array_equal(loaded.matrix(), stored)
        # a second save of the loaded index is byte-identical
        save_index(loaded, tmp_path / "again.idx")
        assert (tmp_path / "again.idx").read_bytes() == path.read_bytes()

    def test_truncated_file_fails_checksum(self, tmp_path, provider):
        index = build_index(schema_with(4), provider)
        path = tmp_path / "db.idx"
        save_index(index, path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError, match="checksum"):
            load_index(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.idx"
        path.write_bytes(b"NOTANIDX" + b"\x00" * 64)
        with pytest.raises(FormatError, match="magic"):
            load_index(path)

    def test_fingerprint_mismatch_warns_but_loads(self, tmp_path, provider, caplog):
        index = build_index(schema_with(3), provider)
        path = tmp_path / "db.idx"
        save_index(index, path)
        assert read_fingerprint(path) == index.provider_fingerprint
        with caplog.at_level(logging.WARNING):
            loaded = load_index(path, expected_fingerprint="something-else")
        assert loaded.db_id == index.db_id
        assert any("stale" in m for m in caplog.messages)
