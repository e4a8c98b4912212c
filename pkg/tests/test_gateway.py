from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from gnrkit.gateway import (
    BackendDescriptor,
    BackendKind,
    Gateway,
    GenerationRequest,
    HttpBackend,
    MockBackend,
    ResponseCache,
    TransportError,
    load_mock_table,
)
from gnrkit.prompting import ChatMessage, Role


def _request(sentence: str, backend_id: str = "mock", request_id: str = "") -> GenerationRequest:
    return GenerationRequest(
        messages=(ChatMessage(Role.SYSTEM, "sys"), ChatMessage(Role.USER, sentence)),
        backend_id=backend_id,
        request_id=request_id,
    )


def _gateway(impl, backend_id="mock", retries=3, backoff_s=0.0, cache=None) -> Gateway:
    gateway = Gateway(cache=cache)
    gateway.register(
        BackendDescriptor(backend_id, BackendKind.MOCK, "mock-model"),
        impl,
        retries=retries,
        backoff_s=backoff_s,
    )
    return gateway


def test_echo_mock_returns_input_sentence():
    gateway = _gateway(MockBackend(mode="echo"))
    result = gateway.generate(_request("Una frase di prova."))
    assert result.error is None
    assert result.text == "Una frase di prova."


def test_rule_mock_uses_lookup_table():
    table = {"I ricercatori hanno pubblicato i risultati.": "Il gruppo di ricerca ha pubblicato i risultati."}
    gateway = _gateway(MockBackend(mode="echo", table=table))
    result = gateway.generate(_request("I ricercatori hanno pubblicato i risultati."))
    assert result.text == "Il gruppo di ricerca ha pubblicato i risultati."


def test_unknown_backend_returns_error_descriptor():
    gateway = _gateway(MockBackend())
    result = gateway.generate(_request("frase", backend_id="x"))
    assert result.error is not None
    assert "unknown backend" in result.error
    assert result.text == ""


def test_failing_mock_exhausts_retry_budget():
    backend = MockBackend(mode="fail")
    gateway = _gateway(backend, retries=2)
    result = gateway.generate(_request("frase"))
    assert result.error is not None
    assert "3 attempts" in result.error
    assert backend.call_count == 3


def test_batch_preserves_positional_alignment():
    gateway = _gateway(MockBackend(mode="echo"))
    requests = [_request(f"frase numero {i}") for i in range(750)]
    results = gateway.generate_batch(requests, max_in_flight=8)
    assert len(results) == 750
    for i, result in enumerate(results):
        assert result.request_id == str(i)
        assert result.text == f"frase numero {i}"


def test_batch_empty_list():
    gateway = _gateway(MockBackend())
    assert gateway.generate_batch([], max_in_flight=4) == []


def test_batch_isolates_single_failure():
    class FlakyAtIndex:
        def __init__(self, failing_prompt):
            self.failing_prompt = failing_prompt

        def complete(self, request):
            prompt = request.messages[-1].content
            if prompt == self.failing_prompt:
                raise TransportError("injected fault")
            return prompt

    gateway = _gateway(FlakyAtIndex("frase 3"), retries=0)
    requests = [_request(f"frase {i}") for i in range(10)]
    results = gateway.generate_batch(requests, max_in_flight=4)
    assert sum(1 for r in results if r.error is None) == 9
    assert results[3].error is not None
    assert results[3].request_id == "3"


def test_batch_bounds_in_flight_requests():
    lock = threading.Lock()
    state = {"active": 0, "peak": 0}

    class Tracking:
        def complete(self, request):
            with lock:
                state["active"] += 1
                state["peak"] = max(state["peak"], state["active"])
            try:
                import time

                time.sleep(0.002)
                return "ok"
            finally:
                with lock:
                    state["active"] -= 1

    gateway = _gateway(Tracking())
    gateway.generate_batch([_request(f"frase {i}") for i in range(40)], max_in_flight=3)
    assert 1 <= state["peak"] <= 3


def test_batch_respects_explicit_request_ids():
    gateway = _gateway(MockBackend(mode="echo"))
    requests = [_request("a", request_id="ra"), _request("b", request_id="rb")]
    results = gateway.generate_batch(requests, max_in_flight=2)
    assert [r.request_id for r in results] == ["ra", "rb"]


def test_retry_success_is_at_most_once():
    class FailOnce:
        def __init__(self):
            self.calls = 0

        def complete(self, request):
            self.calls += 1
            if self.calls == 1:
                raise TransportError("first call fails")
            return "ok"

    backend = FailOnce()
    gateway = _gateway(backend, retries=3)
    results = gateway.generate_batch([_request("frase")], max_in_flight=1)
    assert len(results) == 1
    assert results[0].error is None
    assert backend.calls == 2  # one failure, one success, no extra attempts


def test_request_validation():
    with pytest.raises(ValueError):
        GenerationRequest(messages=(ChatMessage(Role.USER, "no system"),), backend_id="m")
    with pytest.raises(ValueError):
        GenerationRequest(
            messages=(ChatMessage(Role.SYSTEM, "s"), ChatMessage(Role.USER, "u")),
            backend_id="m",
            max_new_tokens=0,
        )


def test_generation_cache_round_trip(tmp_path):
    backend = MockBackend(mode="echo")
    cache = ResponseCache(tmp_path / "gen")
    gateway = _gateway(backend, cache=cache)
    first = gateway.generate(_request("frase memorizzata"))
    assert backend.call_count == 1
    second = gateway.generate(_request("frase memorizzata"))
    assert backend.call_count == 1  # served from cache
    assert second.text == first.text
    assert second.latency_ms == 0.0


def test_cache_key_varies_with_parameters():
    base = _request("stessa frase")
    other = GenerationRequest(
        messages=base.messages, backend_id="mock", max_new_tokens=128, temperature=0.0
    )
    assert ResponseCache.key_for(base, "m") != ResponseCache.key_for(other, "m")
    assert ResponseCache.key_for(base, "m") != ResponseCache.key_for(base, "m2")


def test_load_mock_table(tmp_path):
    path = tmp_path / "table.jsonl"
    path.write_text(
        json.dumps({"input": "frase marcata", "output": "frase neutra"}) + "\n", encoding="utf-8"
    )
    assert load_mock_table(path) == {"frase marcata": "frase neutra"}
    bad = tmp_path / "bad.jsonl"
    bad.write_text(json.dumps({"input": "x"}) + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="mock table"):
        load_mock_table(bad)


class _ScriptedHandler(BaseHTTPRequestHandler):
    statuses: list[int] = []
    seen_payloads: list[dict] = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        _ScriptedHandler.seen_payloads.append(payload)
        status = _ScriptedHandler.statuses.pop(0) if _ScriptedHandler.statuses else 200
        if status != 200:
            self.send_response(status)
            self.end_headers()
            return
        body = json.dumps(
            {"choices": [{"message": {"content": f"echo: {payload['messages'][-1]['content']}"}}]}
        ).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def http_server():
    server = HTTPServer(("127.0.0.1", 0), _ScriptedHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _ScriptedHandler.statuses = []
    _ScriptedHandler.seen_payloads = []
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def test_http_backend_round_trip(http_server, monkeypatch):
    monkeypatch.setenv("GNRKIT_TEST_TOKEN", "secret")
    backend = HttpBackend(endpoint=http_server, model_name="remote-model", auth_env="GNRKIT_TEST_TOKEN")
    gateway = Gateway()
    gateway.register(
        BackendDescriptor("remote", BackendKind.REMOTE_API, "remote-model"), backend, backoff_s=0.0
    )
    result = gateway.generate(_request("frase remota", backend_id="remote"))
    assert result.error is None
    assert result.text == "echo: frase remota"
    payload = _ScriptedHandler.seen_payloads[-1]
    assert payload["model"] == "remote-model"
    assert payload["temperature"] == 0.0
    assert [m["role"] for m in payload["messages"]] == ["system", "user"]


def test_http_backend_retries_on_server_error(http_server):
    _ScriptedHandler.statuses = [500]
    backend = HttpBackend(endpoint=http_server, model_name="remote-model")
    gateway = Gateway()
    gateway.register(
        BackendDescriptor("remote", BackendKind.REMOTE_API, "remote-model"),
        backend,
        retries=2,
        backoff_s=0.0,
    )
    result = gateway.generate(_request("riprova", backend_id="remote"))
    assert result.error is None
    assert result.text == "echo: riprova"
    assert len(_ScriptedHandler.seen_payloads) == 2


def test_http_backend_error_after_budget(http_server):
    _ScriptedHandler.statuses = [500, 500, 500]
    backend = HttpBackend(endpoint=http_server, model_name="remote-model")
    gateway = Gateway()
    gateway.register(
        BackendDescriptor("remote", BackendKind.REMOTE_API, "remote-model"),
        backend,
        retries=2,
        backoff_s=0.0,
    )
    result = gateway.generate(_request("sempre rotto", backend_id="remote"))
    assert result.error is not None
    assert "3 attempts" in result.error
