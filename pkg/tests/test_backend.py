import json

import httpx
import pytest

from tabflow.backend import BackendError, HttpBackend, ScriptedBackend


class FakePost:
    """Scripted replacement for httpx.post recording requests."""

    def __init__(self, outcomes):
        self.outcomes = list(outcomes)
        self.requests = []

    def __call__(self, url, *, json=None, headers=None, timeout=None):
        self.requests.append({"url": url, "json": json, "headers": headers})
        outcome = self.outcomes.pop(0)
        if isinstance(outcome, Exception):
            raise outcome
        return outcome


def ok_response(payload):
    return httpx.Response(
        200, json=payload, request=httpx.Request("POST", "http://backend/v1/chat")
    )


@pytest.fixture
def no_sleep(monkeypatch):
    monkeypatch.setattr("time.sleep", lambda *_: None)


class TestHttpBackend:
    def test_request_shape_and_content_extraction(self, monkeypatch):
        fake = FakePost([ok_response({"content": "hello"})])
        monkeypatch.setattr(httpx, "post", fake)
        backend = HttpBackend(url="http://backend/v1/chat", model="m1")
        reply = backend.complete(
            [{"role": "user", "content": "hi"}], temperature=0.3, max_tokens=64
        )
        assert reply == "hello"
        sent = fake.requests[0]["json"]
        assert sent == {
            "model": "m1",
            "messages": [{"role": "user", "content": "hi"}],
            "temperature": 0.3,
            "max_tokens": 64,
        }

    def test_openai_choices_shape_tolerated(self, monkeypatch):
        fake = FakePost([ok_response({"choices": [{"message": {"content": "alt"}}]})])
        monkeypatch.setattr(httpx, "post", fake)
        backend = HttpBackend(url="http://backend/v1/chat")
        assert backend.complete([{"role": "user", "content": "x"}]) == "alt"

    def test_token_header_from_env(self, monkeypatch):
        fake = FakePost([ok_response({"content": "y"})])
        monkeypatch.setattr(httpx, "post", fake)
        monkeypatch.setenv("ENGINE_BACKEND_TOKEN", "sekrit")
        backend = HttpBackend(url="http://backend/v1/chat")
        backend.complete([{"role": "user", "content": "x"}])
        assert fake.requests[0]["headers"]["Authorization"] == "Bearer sekrit"

    def test_retries_then_success(self, monkeypatch, no_sleep):
        request = httpx.Request("POST", "http://backend/v1/chat")
        fake = FakePost(
            [
                httpx.ConnectError("down", request=request),
                httpx.ConnectError("still down", request=request),
                ok_response({"content": "third time"}),
            ]
        )
        monkeypatch.setattr(httpx, "post", fake)
        backend = HttpBackend(url="http://backend/v1/chat")
        assert backend.complete([{"role": "user", "content": "x"}]) == "third time"
        assert len(fake.requests) == 3

    def test_three_failures_raise_backend_error(self, monkeypatch, no_sleep):
        request = httpx.Request("POST", "http://backend/v1/chat")
        fake = FakePost(
            [httpx.ConnectError("down", request=request) for _ in range(3)]
        )
        monkeypatch.setattr(httpx, "post", fake)
        backend = HttpBackend(url="http://backend/v1/chat")
        with pytest.raises(BackendError):
            backend.complete([{"role": "user", "content": "x"}])
        assert len(fake.requests) == 3

    def test_http_error_status_retried(self, monkeypatch, no_sleep):
        fake = FakePost(
            [
                httpx.Response(502, request=httpx.Request("POST", "http://b")),
                ok_response({"content": "recovered"}),
            ]
        )
        monkeypatch.setattr(httpx, "post", fake)
        backend = HttpBackend(url="http://backend/v1/chat")
        assert backend.complete([{"role": "user", "content": "x"}]) == "recovered"


class TestScriptedBackend:
    def test_from_file_and_replay(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps({"responses": ["a", "b"]}))
        backend = ScriptedBackend.from_file(path)
        assert backend.complete([]) == "a"
        assert backend.complete([]) == "b"
        with pytest.raises(BackendError):
            backend.complete([])

    def test_bare_list_accepted(self, tmp_path):
        path = tmp_path / "script.json"
        path.write_text(json.dumps(["only"]))
        assert ScriptedBackend.from_file(path).complete([]) == "only"

    def test_records_calls(self):
        backend = ScriptedBackend(["x"])
        backend.complete([{"role": "user", "content": "q"}])
        assert backend.calls == [[{"role": "user", "content": "q"}]]
