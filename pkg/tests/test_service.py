import json

import pytest
from fastapi.testclient import TestClient

from squill.fixtures import make_fixture
from squill.generator import GeneratorConfig
from squill.runtime import EngineRuntime, RuntimeConfig
from squill.service import create_app


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    root = tmp_path_factory.mktemp("svcfix")
    manifest = make_fixture(root, n_databases=2, questions_per_db=4, seed=3)
    corpus = json.loads(manifest.corpus_path.read_text())
    plan = json.loads(manifest.plan_paths["repairable"].read_text())
    # enough scripted responses for several /ask calls
    record = corpus[0]
    script = plan[record["question_id"]] * 6
    cfg = RuntimeConfig(
        databases_dir=manifest.databases_dir,
        generator=GeneratorConfig(kind="scripted", script=tuple(script)),
        k=10, max_iterations=3, row_cap=5,
    )
    runtime = EngineRuntime(cfg)
    client = TestClient(create_app(runtime))
    return client, record, manifest


def test_health(service):
    client, _record, _manifest = service
    assert client.get("/health").json() == {"status": "ok"}


def test_config_advertises_bounds(service):
    client, _record, _manifest = service
    payload = client.get("/config").json()
    assert payload["k"] == 10
    assert payload["max_iterations"] == 3
    assert payload["row_cap"] == 5


def test_databases_listing(service):
    client, _record, _manifest = service
    payload = client.get("/databases").json()
    ids = [d["db_id"] for d in payload["databases"]]
    assert ids == ["fixdb00", "fixdb01"]
    assert payload["databases"][0]["columns"] == 60


def test_schema_endpoint(service):
    client, record, _manifest = service
    payload = client.get(f"/schema/{record['db_id']}").json()
    assert payload["db_id"] == record["db_id"]
    assert len(payload["tables"]) == 6
    first = payload["tables"][0]["columns"][0]
    assert {"name", "type", "primary_key"} <= set(first)
    assert payload["foreign_keys"]  # id chain between tables


def test_schema_unknown_db_is_404(service):
    client, _record, _manifest = service
    response = client.get("/schema/nope")
    assert response.status_code == 404


def test_retrieve_endpoint_scores_descending(service):
    client, record, _manifest = service
    response = client.post("/retrieve", json={
        "db_id": record["db_id"], "question": record["question"], "k": 10})
    assert response.status_code == 200
    columns = response.json()["columns"]
    assert len(columns) == 10
    scores = [c["score"] for c in columns]
    assert scores == sorted(scores, reverse=True)


def test_ask_returns_full_trace(service):
    client, record, _manifest = service
    response = client.post("/ask", json={
        "db_id": record["db_id"], "question": record["question"],
        "evidence": record.get("evidence"), "max_iterations": 3})
    assert response.status_code == 200
    trace = response.json()
    assert trace["executable"] is True
    assert len(trace["attempts"]) == 2  # repairable plan: one failure, one success
    assert trace["attempts"][0]["outcome"]["status"] == "failure"
    assert trace["attempts"][0]["outcome"]["error_category"] == "syntax_error"
    assert trace["attempts"][1]["outcome"]["status"] == "success"
    assert trace["final_sql"] == trace["attempts"][1]["sql"]
    assert trace["retrieval"]


def test_ask_respects_budget_zero(service):
    client, record, _manifest = service
    response = client.post("/ask", json={
        "db_id": record["db_id"], "question": record["question"],
        "max_iterations": 0})
    trace = response.json()
    assert trace["executable"] is False
    assert len(trace["attempts"]) == 1


def test_execute_reports_syntax_error(service):
    client, record, _manifest = service
    response = client.post("/execute", json={"db_id": record["db_id"], "sql": "SELEC 1"})
    assert response.status_code == 200
    outcome = response.json()
    assert outcome["status"] == "failure"
    assert outcome["error_category"] == "syntax_error"


def test_execute_row_cap(service):
    client, record, _manifest = service
    response = client.post("/execute", json={
        "db_id": record["db_id"],
        "sql": "SELECT a.id FROM accounts a, operations b"})
    outcome = response.json()
    assert outcome["status"] == "success"
    assert outcome["row_count"] == 16
    assert len(outcome["rows"]) == 5
    assert outcome["rows_truncated"] is True


def test_execute_never_mutates(service):
    client, record, manifest = service
    db_path = manifest.db_path(record["db_id"])
    before = db_path.read_bytes()
    client.post("/execute", json={"db_id": record["db_id"],
                                  "sql": "DELETE FROM accounts"})
    assert db_path.read_bytes() == before


def test_malformed_body_yields_field_errors(service):
    client, _record, _manifest = service
    response = client.post("/ask", json={"db_id": "fixdb00"})
    assert response.status_code == 422
    detail = response.json()["detail"]
    assert any("question" in str(item.get("loc")) for item in detail)


def test_unknown_db_on_post_is_404(service):
    client, _record, _manifest = service
    response = client.post("/execute", json={"db_id": "ghost", "sql": "SELECT 1"})
    assert response.status_code == 404
