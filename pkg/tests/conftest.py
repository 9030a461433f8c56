import sqlite3

import pytest

from squill.corpus import load_corpus
from squill.embeddings import HashingEmbedder
from squill.fixtures import make_fixture
from squill.runtime import EngineRuntime, RuntimeConfig


@pytest.fixture(scope="session")
def fixture_manifest(tmp_path_factory):
    """The synthetic mini-benchmark: 20 databases, 200 questions, plans."""
    root = tmp_path_factory.mktemp("fixture")
    return make_fixture(root, seed=7)


@pytest.fixture(scope="session")
def fixture_corpus(fixture_manifest):
    return load_corpus(fixture_manifest.corpus_path)


@pytest.fixture(scope="session")
def fixture_runtime(fixture_manifest):
    cfg = RuntimeConfig(databases_dir=fixture_manifest.databases_dir)
    return EngineRuntime(cfg)


@pytest.fixture(scope="session")
def fixture_schemas(fixture_manifest, fixture_runtime):
    return {db: fixture_runtime.schema(db) for db in fixture_manifest.db_ids}


@pytest.fixture(scope="session")
def provider():
    return HashingEmbedder(dim=64)


def build_demo_db(path):
    """Two-table database mirroring the documented schema-entry example."""
    conn = sqlite3.connect(path)
    conn.executescript(
        """
        CREATE TABLE disp (
            disp_id INTEGER PRIMARY KEY,
            type TEXT
        );
        CREATE TABLE card (
            card_id INTEGER PRIMARY KEY,
            disp_id INTEGER REFERENCES disp(disp_id)
        );
        INSERT INTO disp VALUES (9, 'OWNER'), (2, 'DISPONENT'), (5, 'OWNER');
        INSERT INTO card VALUES (1, 9), (2, 2);
        """
    )
    conn.commit()
    conn.close()
    return path


@pytest.fixture
def demo_db(tmp_path):
    return build_demo_db(tmp_path / "demo.sqlite")
