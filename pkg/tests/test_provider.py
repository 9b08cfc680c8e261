import json
import math
import threading
import time
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest
from hypothesis import given, strategies as st

from ltrans.provider import (
    ChatRequest,
    ChatResponse,
    HashingEmbedder,
    HttpError,
    HttpProvider,
    MalformedScript,
    ProviderError,
    ProviderExhausted,
    ScriptedChatProvider,
    Timeout,
    load_scripted_provider,
)


# -- request/response validation ----------------------------------------------

def test_chat_request_requires_user_text():
    with pytest.raises(ValueError):
        ChatRequest(system_text="s", user_text="")


def test_chat_response_complete_requires_text():
    with pytest.raises(ValueError):
        ChatResponse(text="", model_id="m", finish_reason="complete")
    ChatResponse(text="", model_id="m", finish_reason="error")  # fine


# -- offline embedder ----------------------------------------------------------

def test_hashing_embedder_is_deterministic_and_normalized():
    emb = HashingEmbedder(dimension=64)
    a = emb.embed("SELECT * FROM t")
    b = emb.embed("SELECT * FROM t")
    assert a.values == b.values
    assert len(a.values) == 64
    assert math.isclose(sum(v * v for v in a.values), 1.0, abs_tol=1e-9)
    assert emb.model_id == "hash-64"


def test_hashing_embedder_rejects_empty_and_bad_dimension():
    with pytest.raises(ProviderError):
        HashingEmbedder().embed("")
    with pytest.raises(ValueError):
        HashingEmbedder(dimension=0)


@given(st.text(min_size=1, max_size=200))
def test_hashing_embedder_never_zero(text):
    values = HashingEmbedder(dimension=32).embed(text).values
    assert math.isclose(math.sqrt(sum(v * v for v in values)), 1.0, rel_tol=1e-9)


# -- scripted provider ----------------------------------------------------------

def _req(text="ask"):
    return ChatRequest(system_text="sys", user_text=text)


def test_flat_script_replays_in_order():
    provider = ScriptedChatProvider(["one", "two"])
    assert provider.chat(_req()).text == "one"
    assert provider.chat(_req(), role="refinement").text == "two"  # roles ignored in flat mode
    with pytest.raises(ProviderExhausted):
        provider.chat(_req())
    assert provider.total_consumed == 2


def test_role_script_keeps_queues_separate():
    provider = ScriptedChatProvider({"initial": ["i1"], "refinement": ["r1", "r2"]})
    assert provider.chat(_req(), role="refinement").text == "r1"
    assert provider.chat(_req(), role="initial").text == "i1"
    assert provider.chat(_req(), role="refinement").text == "r2"
    with pytest.raises(ProviderExhausted):
        provider.chat(_req(), role="initial")
    assert provider.consumed_for("refinement") == 2


def test_unknown_role_tag_rejected():
    with pytest.raises(MalformedScript):
        ScriptedChatProvider({"translator": ["x"]})
    with pytest.raises(MalformedScript):
        ScriptedChatProvider({"s1": {"translator": ["x"]}})
    with pytest.raises(MalformedScript):
        ScriptedChatProvider({"initial": ["ok"], "s1": {"initial": ["x"]}})
    with pytest.raises(MalformedScript):
        ScriptedChatProvider(42)


def test_sample_scoped_script():
    provider = ScriptedChatProvider({
        "s1": {"initial": ["a1"]},
        "s2": {"initial": ["b1"], "refinement": ["b2"]},
    })
    s1 = provider.scoped("s1")
    s2 = provider.scoped("s2")
    assert s2.chat(_req(), role="initial").text == "b1"
    assert s1.chat(_req(), role="initial").text == "a1"
    assert s2.chat(_req(), role="refinement").text == "b2"
    with pytest.raises(ProviderExhausted):
        s1.chat(_req(), role="initial")
    assert provider.consumed_for("initial", "s1") == 1
    assert provider.consumed_for("refinement", "s2") == 1
    assert provider.total_consumed == 3


def test_empty_scripted_text_marks_error_finish():
    provider = ScriptedChatProvider([""])
    response = provider.chat(_req())
    assert response.finish_reason == "error"
    assert response.text == ""


def test_scripted_provider_thread_safety():
    n = 200
    provider = ScriptedChatProvider([f"r{i}" for i in range(n)])
    seen: list[str] = []
    lock = threading.Lock()

    def worker():
        while True:
            try:
                text = provider.chat(_req()).text
            except ProviderExhausted:
                return
            with lock:
                seen.append(text)

    threads = [threading.Thread(target=worker) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(seen) == n
    assert Counter(seen) == Counter(f"r{i}" for i in range(n))
    assert provider.total_consumed == n


def test_load_scripted_provider(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps(["hello"]))
    provider = load_scripted_provider(path)
    assert provider.chat(_req()).text == "hello"
    with pytest.raises(MalformedScript):
        load_scripted_provider(tmp_path / "missing.json")
    path.write_text("{broken")
    with pytest.raises(MalformedScript):
        load_scripted_provider(path)


# -- HTTP provider against a local stub server ---------------------------------

class _StubHandler(BaseHTTPRequestHandler):
    calls: list[dict] = []
    behavior = "ok"  # "ok" | "error500" | "sleep"

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        payload = json.loads(self.rfile.read(length) or b"{}")
        type(self).calls.append({
            "path": self.path,
            "payload": payload,
            "auth": self.headers.get("Authorization"),
        })
        if type(self).behavior == "sleep":
            time.sleep(1.5)
        try:
            if type(self).behavior == "error500":
                self.send_response(500)
                self.end_headers()
                self.wfile.write(b"boom")
                return
            if self.path == "/chat/completions":
                body = {
                    "model": "stub-chat",
                    "choices": [{"message": {"content": "translated"}, "finish_reason": "stop"}],
                }
            else:
                body = {"model": "stub-embed", "data": [{"embedding": [1.0, 2.0, 2.0]}]}
            raw = json.dumps(body).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)
        except (BrokenPipeError, ConnectionResetError):
            pass  # the timed-out client already hung up

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    _StubHandler.calls = []
    _StubHandler.behavior = "ok"
    server = ThreadingHTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}", _StubHandler
    server.shutdown()
    thread.join()


def test_http_chat_sends_bearer_and_parses(stub_server, monkeypatch):
    endpoint, handler = stub_server
    monkeypatch.setenv("LT_API_KEY", "sekret")
    provider = HttpProvider(endpoint, chat_model_id="m-chat")
    response = provider.chat(ChatRequest(system_text="sys", user_text="hi", temperature=0.3))
    assert response.text == "translated"
    assert response.finish_reason == "complete"
    assert response.model_id == "stub-chat"
    (call,) = handler.calls
    assert call["path"] == "/chat/completions"
    assert call["auth"] == "Bearer sekret"
    assert call["payload"]["model"] == "m-chat"
    assert call["payload"]["temperature"] == 0.3
    assert [m["role"] for m in call["payload"]["messages"]] == ["system", "user"]


def test_http_embed_locks_dimension(stub_server):
    endpoint, handler = stub_server
    provider = HttpProvider(endpoint, embed_model_id="m-embed")
    vec = provider.embed("some text")
    assert vec.values == [1.0, 2.0, 2.0]
    assert provider.dimension == 3
    provider._dimension = 5  # simulate a corpus that promised 5 dims
    with pytest.raises(ProviderError):
        provider.embed("more text")


def test_http_error_status_no_retry(stub_server):
    endpoint, handler = stub_server
    handler.behavior = "error500"
    provider = HttpProvider(endpoint)
    with pytest.raises(HttpError) as err:
        provider.chat(ChatRequest(system_text="s", user_text="u"))
    assert err.value.status == 500
    assert len(handler.calls) == 1  # 5xx is not retried


def test_http_timeout_retries_once(stub_server):
    endpoint, handler = stub_server
    handler.behavior = "sleep"
    provider = HttpProvider(endpoint)
    with pytest.raises(Timeout):
        provider.chat(ChatRequest(system_text="s", user_text="u", timeout=0.4))
    assert len(handler.calls) == 2  # original attempt plus exactly one retry


def test_http_embed_rejects_empty(stub_server):
    endpoint, _ = stub_server
    with pytest.raises(ProviderError):
        HttpProvider(endpoint).embed("")
