import json
import threading
import time

import pytest

from linkq.errors import AuthError, BackendUnavailable, MalformedResponse, ScriptedMiss
from linkq.llm import (
    BackendConfig,
    ChatMessage,
    HttpBackend,
    SamplingParams,
    ScriptedBackend,
    validate_prompt,
)


def _prompt(text: str) -> list[ChatMessage]:
    return [ChatMessage.system("be brief"), ChatMessage.user(text)]


def _ok_body(content: str) -> str:
    return json.dumps({"choices": [{"message": {"content": content}}]})


def _config(**kwargs) -> BackendConfig:
    defaults = dict(
        endpoint_url="http://example.invalid/v1/chat",
        model_name="test-model",
        max_retries=0,
    )
    defaults.update(kwargs)
    return BackendConfig(**defaults)


# --- prompt validation ---

def test_prompt_validation():
    validate_prompt(_prompt("hi"))
    with pytest.raises(ValueError):
        validate_prompt([])
    with pytest.raises(ValueError):
        validate_prompt([ChatMessage.user("a"), ChatMessage.system("late")])
    with pytest.raises(ValueError):
        validate_prompt([ChatMessage.user("")])


# --- scripted backend ---

def test_scripted_substring_dispatch():
    backend = ScriptedBackend([("Once A Gentleman", "reply1")])
    out = backend.complete(_prompt("look up Once A Gentleman for me"))
    assert out == "reply1"


def test_scripted_empty_script_misses():
    backend = ScriptedBackend([])
    with pytest.raises(ScriptedMiss):
        backend.complete(_prompt("anything"))


def test_scripted_first_match_wins():
    backend = ScriptedBackend([("alpha", "first"), ("beta", "second")])
    assert backend.complete(_prompt("alpha and beta are both here")) == "first"


def test_scripted_miss_is_malformed_response():
    backend = ScriptedBackend([("nope", "reply")])
    with pytest.raises(MalformedResponse):
        backend.complete(_prompt("something else"))


def test_scripted_matches_last_user_message_only():
    backend = ScriptedBackend([("early", "from-early"), ("late", "from-late")])
    prompt = [
        ChatMessage.system("s"),
        ChatMessage.user("early text"),
        ChatMessage.assistant("ok"),
        ChatMessage.user("late text"),
    ]
    assert backend.complete(prompt) == "from-late"


def test_scripted_is_deterministic_and_records_transcript():
    backend = ScriptedBackend([("x", "y")])
    prompt = _prompt("x marks the spot")
    first = backend.complete(prompt)
    second = backend.complete(prompt)
    assert first == second == "y"
    assert backend.transcript == [tuple(prompt), tuple(prompt)]
    assert backend.calls_mentioning("marks the spot") == 2


def test_scripted_from_file(tmp_path):
    path = tmp_path / "script.json"
    path.write_text(json.dumps([{"match": "m", "response": "r"}]), encoding="utf-8")
    backend = ScriptedBackend.from_file(path)
    assert backend.complete(_prompt("has m inside")) == "r"


# --- http backend ---

def test_http_success():
    def transport(url, headers, payload, timeout):
        assert payload["model"] == "test-model"
        assert payload["messages"][-1] == {"role": "user", "content": "hello"}
        assert payload["temperature"] == 0.7 and payload["top_p"] == 0.8
        assert "repetition_penalty" not in payload
        return 200, _ok_body("world")

    backend = HttpBackend(_config(), transport=transport)
    assert backend.complete(_prompt("hello")) == "world"


def test_http_sends_repetition_penalty_only_when_supported():
    seen = {}

    def transport(url, headers, payload, timeout):
        seen.update(payload)
        return 200, _ok_body("ok")

    backend = HttpBackend(
        _config(), supports_repetition_penalty=True, transport=transport
    )
    backend.complete(_prompt("hello"), SamplingParams(repetition_penalty=1.2))
    assert seen["repetition_penalty"] == 1.2


def test_http_retries_transient_then_succeeds():
    calls = []

    def transport(url, headers, payload, timeout):
        calls.append(1)
        if len(calls) < 3:
            return 503, "unavailable"
        return 200, _ok_body("finally")

    backend = HttpBackend(
        _config(max_retries=3), transport=transport, sleep=lambda _: None
    )
    assert backend.complete(_prompt("hello")) == "finally"
    assert len(calls) == 3


def test_http_unreachable_raises_backend_unavailable():
    def transport(url, headers, payload, timeout):
        raise ConnectionError("no route to host")

    backend = HttpBackend(_config(max_retries=0), transport=transport)
    with pytest.raises(BackendUnavailable):
        backend.complete(_prompt("hello"))


def test_http_429_retried_then_fails():
    calls = []

    def transport(url, headers, payload, timeout):
        calls.append(1)
        return 429, "slow down"

    backend = HttpBackend(
        _config(max_retries=2), transport=transport, sleep=lambda _: None
    )
    with pytest.raises(BackendUnavailable):
        backend.complete(_prompt("hello"))
    assert len(calls) == 3


def test_http_auth_error_not_retried():
    calls = []

    def transport(url, headers, payload, timeout):
        calls.append(1)
        return 401, "who are you"

    backend = HttpBackend(_config(max_retries=5), transport=transport)
    with pytest.raises(AuthError):
        backend.complete(_prompt("hello"))
    assert len(calls) == 1


def test_http_malformed_payload():
    backend = HttpBackend(_config(), transport=lambda *a: (200, "not json"))
    with pytest.raises(MalformedResponse):
        backend.complete(_prompt("hello"))

    backend = HttpBackend(_config(), transport=lambda *a: (200, json.dumps({"x": 1})))
    with pytest.raises(MalformedResponse):
        backend.complete(_prompt("hello"))


def test_http_api_key_header_from_env(monkeypatch):
    monkeypatch.setenv("MY_KEY_VAR", "sekrit")
    seen = {}

    def transport(url, headers, payload, timeout):
        seen.update(headers)
        return 200, _ok_body("ok")

    backend = HttpBackend(_config(api_key_env_var="MY_KEY_VAR"), transport=transport)
    backend.complete(_prompt("hello"))
    assert seen["Authorization"] == "Bearer sekrit"


def test_http_admission_limit_bounds_in_flight_requests():
    limit = 2
    active = 0
    peak = 0
    lock = threading.Lock()

    def transport(url, headers, payload, timeout):
        nonlocal active, peak
        with lock:
            active += 1
            peak = max(peak, active)
        time.sleep(0.02)
        with lock:
            active -= 1
        return 200, _ok_body("ok")

    backend = HttpBackend(_config(max_in_flight=limit), transport=transport)
    threads = [
        threading.Thread(target=backend.complete, args=(_prompt(f"m{i}"),))
        for i in range(8)
    ]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert peak <= limit
