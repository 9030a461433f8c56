import threading

import pytest

from squill.errors import GenerationError, ScriptExhaustedError, TransportError
from squill.generator import (
    GeneratorConfig,
    RemoteGenerator,
    ScriptedGenerator,
    extract_sql,
    generate_sql,
    make_generator,
    sample_candidates,
)


class TestExtract:
    def test_fenced_sql_block(self):
        assert extract_sql("```sql\nSELECT 1\n```") == "SELECT 1"

    def test_plain_fence(self):
        assert extract_sql("```\nSELECT a FROM t\n```") == "SELECT a FROM t"

    def test_no_fence_trims_whitespace(self):
        assert extract_sql("  SELECT 1\n") == "SELECT 1"

    def test_sql_text_never_altered(self):
        sql = "SELECT a, b FROM t WHERE x = 'y' -- keep me"
        assert extract_sql(f"```sql\n{sql}\n```") == sql


class TestScripted:
    def test_returns_in_order(self):
        gen = ScriptedGenerator(["SELECT 1", "SELECT 2"])
        assert gen.generate("p") == "SELECT 1"
        assert gen.generate("p") == "SELECT 2"

    def test_exhaustion_is_error_not_cycle(self):
        gen = ScriptedGenerator(["SELECT 1"])
        gen.generate("p")
        with pytest.raises(ScriptExhaustedError):
            gen.generate("p")

    def test_sample_consumes_next_n(self):
        gen = ScriptedGenerator(["a", "b", "c"])
        assert gen.sample("p", 3) == ["a", "b", "c"]

    def test_sample_one_equals_generate(self):
        a = ScriptedGenerator(["SELECT 9"]).sample("p", 1)
        b = ScriptedGenerator(["SELECT 9"]).generate("p")
        assert a == [b]

    def test_empty_prompt_rejected(self):
        with pytest.raises(ValueError):
            ScriptedGenerator(["x"]).generate("")

    def test_concurrent_consumption_is_atomic(self):
        gen = ScriptedGenerator([f"q{i}" for i in range(100)])
        seen = []
        lock = threading.Lock()

        def worker():
            for _ in range(10):
                value = gen.generate("p")
                with lock:
                    seen.append(value)

        threads = [threading.Thread(target=worker) for _ in range(10)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sorted(seen) == sorted(f"q{i}" for i in range(100))


class FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            import requests
            raise requests.HTTPError(f"status {self.status_code}")

    def json(self):
        return self._payload


class FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.payloads = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.payloads.append(json)
        item = self.responses.pop(0)
        if isinstance(item, Exception):
            raise item
        return item


def remote_cfg(**kw):
    return GeneratorConfig(kind="remote", endpoint="http://gen.test/v1/chat",
                           model="coder", **kw)


def chat_payload(*texts):
    return {"choices": [{"message": {"content": t}} for t in texts]}


class TestRemote:
    def test_generates_and_extracts(self):
        session = FakeSession([FakeResponse(chat_payload("```sql\nSELECT 1\n```"))])
        gen = RemoteGenerator(remote_cfg(), session=session)
        assert gen.generate("prompt") == "SELECT 1"
        sent = session.payloads[0]
        assert sent["messages"][0] == {"role": "system",
                                       "content": "Generate only the SQL query."}
        assert sent["messages"][1]["content"] == "prompt"
        assert sent["temperature"] == 0.0

    def test_sample_requests_n(self):
        session = FakeSession([FakeResponse(chat_payload("SELECT 1", "SELECT 2", "SELECT 3"))])
        gen = RemoteGenerator(remote_cfg(), session=session)
        out = gen.sample("prompt", 3, temperature=0.7)
        assert out == ["SELECT 1", "SELECT 2", "SELECT 3"]
        assert session.payloads[0]["n"] == 3
        assert session.payloads[0]["temperature"] == 0.7

    def test_retries_then_fails_with_transport_error(self, monkeypatch):
        import requests
        monkeypatch.setattr("time.sleep", lambda s: None)
        session = FakeSession([requests.ConnectionError("down")] * 3)
        gen = RemoteGenerator(remote_cfg(), session=session)
        with pytest.raises(TransportError) as excinfo:
            gen.generate("prompt")
        assert excinfo.value.attempts == 3

    def test_short_choice_list_is_generation_error(self):
        session = FakeSession([FakeResponse(chat_payload("only one"))])
        gen = RemoteGenerator(remote_cfg(), session=session)
        with pytest.raises(GenerationError):
            gen.sample("prompt", 4)


def test_config_validation():
    with pytest.raises(ValueError):
        GeneratorConfig(kind="scripted", script=())
    with pytest.raises(ValueError):
        GeneratorConfig(kind="remote")
    with pytest.raises(ValueError):
        GeneratorConfig(kind="scripted", script=("x",), temperature=-1)


def test_module_level_helpers():
    cfg = GeneratorConfig(kind="scripted", script=("SELECT 5",))
    assert generate_sql("p", cfg) == "SELECT 5"
    gen = make_generator(GeneratorConfig(kind="scripted", script=("a", "b")))
    assert sample_candidates("p", gen, n=2) == ["a", "b"]
