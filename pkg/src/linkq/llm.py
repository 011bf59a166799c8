"""Chat-completion backends: a remote HTTP client and a scripted test double.

Both expose the same ``complete(prompt, params)`` surface and can be shared
freely between threads; the HTTP backend additionally caps the number of
in-flight requests.
"""

from __future__ import annotations

import json
import logging
import os
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol, Sequence

import requests

from .errors import AuthError, BackendUnavailable, MalformedResponse, ScriptedMiss

log = logging.getLogger(__name__)

SYSTEM = "system"
USER = "user"
ASSISTANT = "assistant"

# Retry policy defaults: base delay doubles each attempt, plus a little jitter.
RETRY_BASE_DELAY = 0.5
RETRY_FACTOR = 2.0


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    @classmethod
    def system(cls, content: str) -> "ChatMessage":
        return cls(SYSTEM, content)

    @classmethod
    def user(cls, content: str) -> "ChatMessage":
        return cls(USER, content)

    @classmethod
    def assistant(cls, content: str) -> "ChatMessage":
        return cls(ASSISTANT, content)

    def to_wire(self) -> dict:
        return {"role": self.role, "content": self.content}


def validate_prompt(prompt: Sequence[ChatMessage]) -> None:
    """Reject prompts that violate the message-list invariants."""
    if not prompt:
        raise ValueError("prompt must contain at least one message")
    for i, msg in enumerate(prompt):
        if msg.role not in (SYSTEM, USER, ASSISTANT):
            raise ValueError(f"unknown role {msg.role!r} at position {i}")
        if msg.role == SYSTEM and i != 0:
            raise ValueError("a system message may only appear first")
        if msg.role in (USER, ASSISTANT) and not msg.content:
            raise ValueError(f"empty {msg.role} message at position {i}")


@dataclass(frozen=True)
class SamplingParams:
    """Decoding settings passed through to the model endpoint."""

    temperature: float = 0.7
    top_p: float = 0.8
    repetition_penalty: float = 1.05
    max_tokens: int = 1024
    stop: tuple[str, ...] = ()


@dataclass(frozen=True)
class BackendConfig:
    endpoint_url: str
    model_name: str
    api_key_env_var: str = "LINKQ_API_KEY"
    timeout: float = 60.0
    max_in_flight: int = 4
    max_retries: int = 3

    def __post_init__(self) -> None:
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class Backend(Protocol):
    """Anything that can turn a chat prompt into a completion string."""

    def complete(
        self, prompt: Sequence[ChatMessage], params: SamplingParams | None = None
    ) -> str: ...


# transport(url, headers, payload, timeout) -> (status_code, body_text)
Transport = Callable[[str, dict, dict, float], tuple[int, str]]


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float):
    resp = requests.post(url, json=payload, headers=headers, timeout=timeout)
    return resp.status_code, resp.text


class HttpBackend:
    """JSON chat-completion client with retries and an admission limit.

    Transient failures (timeouts, connection errors, 429 and 5xx statuses)
    are retried up to ``config.max_retries`` times with exponential backoff;
    anything left over surfaces as :class:`BackendUnavailable`. The
    ``transport`` hook exists so tests can count and fake requests.
    """

    def __init__(
        self,
        config: BackendConfig,
        *,
        supports_repetition_penalty: bool = False,
        transport: Transport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self._config = config
        self._supports_repetition_penalty = supports_repetition_penalty
        self._transport = transport or _requests_transport
        self._sleep = sleep
        self._gate = threading.BoundedSemaphore(config.max_in_flight)
        self._rng = random.Random()

    def _payload(self, prompt: Sequence[ChatMessage], params: SamplingParams) -> dict:
        payload = {
            "model": self._config.model_name,
            "messages": [m.to_wire() for m in prompt],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
        }
        if self._supports_repetition_penalty:
            payload["repetition_penalty"] = params.repetition_penalty
        if params.stop:
            payload["stop"] = list(params.stop)
        return payload

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self._config.api_key_env_var, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def complete(
        self, prompt: Sequence[ChatMessage], params: SamplingParams | None = None
    ) -> str:
        validate_prompt(prompt)
        params = params or SamplingParams()
        payload = self._payload(prompt, params)
        headers = self._headers()
        cfg = self._config

        last_failure = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                delay = RETRY_BASE_DELAY * (RETRY_FACTOR ** (attempt - 1))
                self._sleep(delay + self._rng.uniform(0, delay / 4))
            try:
                with self._gate:
                    status, body = self._transport(
                        cfg.endpoint_url, headers, payload, cfg.timeout
                    )
            except (requests.Timeout, requests.ConnectionError, OSError) as exc:
                last_failure = f"transport error: {exc}"
                log.debug("attempt %d failed: %s", attempt + 1, last_failure)
                continue
            if status in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {status})")
            if status == 429 or status >= 500:
                last_failure = f"HTTP {status}"
                log.debug("attempt %d failed: %s", attempt + 1, last_failure)
                continue
            if status != 200:
                raise MalformedResponse(f"unexpected HTTP {status}: {body[:200]}")
            return _extract_completion(body)
        raise BackendUnavailable(
            f"{cfg.endpoint_url} unavailable after "
            f"{cfg.max_retries + 1} attempts (last: {last_failure})"
        )


def _extract_completion(body: str) -> str:
    try:
        doc = json.loads(body)
        content = doc["choices"][0]["message"]["content"]
    except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
        raise MalformedResponse(f"cannot read completion from payload: {exc}") from exc
    if not isinstance(content, str):
        raise MalformedResponse("completion content is not a string")
    return content


class ScriptedBackend:
    """Deterministic backend driven by (matcher, response) pairs.

    The first matcher found as a substring of the final user message wins.
    Every prompt is recorded in ``transcript`` so tests can assert on call
    order and count.
    """

    def __init__(self, script: Sequence[tuple[str, str]]) -> None:
        self._script = [(str(m), str(r)) for m, r in script]
        self._transcript: list[tuple[ChatMessage, ...]] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        """Load a script from JSON: a list of {"match":..., "response":...}."""
        with open(path, encoding="utf-8") as handle:
            entries = json.load(handle)
        script = []
        for entry in entries:
            if isinstance(entry, dict):
                script.append((entry["match"], entry["response"]))
            else:
                matcher, response = entry
                script.append((matcher, response))
        return cls(script)

    @property
    def transcript(self) -> list[tuple[ChatMessage, ...]]:
        with self._lock:
            return list(self._transcript)

    def calls_mentioning(self, fragment: str) -> int:
        """How many recorded prompts carry `fragment` in their final user
        message (the part that identifies the query, not few-shot echoes)."""
        count = 0
        for prompt in self.transcript:
            last_user = next(
                (msg for msg in reversed(prompt) if msg.role == USER), None
            )
            if last_user is not None and fragment in last_user.content:
                count += 1
        return count

    def complete(
        self, prompt: Sequence[ChatMessage], params: SamplingParams | None = None
    ) -> str:
        validate_prompt(prompt)
        with self._lock:
            self._transcript.append(tuple(prompt))
        last_user = next(
            (msg for msg in reversed(prompt) if msg.role == USER), None
        )
        if last_user is None:
            raise ScriptedMiss("prompt has no user message to match against")
        for matcher, response in self._script:
            if matcher in last_user.content:
                return response
        raise ScriptedMiss(
            f"no scripted entry matches: {last_user.content[:120]!r}"
        )
