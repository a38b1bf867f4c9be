"""Completion-provider gateway: HTTP chat client, scripted mock, caching, retries.

Every component that needs text generation talks to a ``CompletionProvider``.
Two implementations ship here: ``HttpChatProvider`` speaks the common
chat-completions wire convention (messages array in, choices array out), and
``MockProvider`` replays a scripted rule table for deterministic offline runs.
``with_cache`` wraps any provider with response memoization, optionally
persisted to disk.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import requests

logger = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 512
DEFAULT_TEMPERATURE = 0.1

RETRY_ATTEMPTS = 3


class GatewayError(Exception):
    """Raised when a completion provider cannot produce a result."""


@dataclass(frozen=True)
class CompletionRequest:
    """One completion call: optional system text plus the user message."""

    user_text: str
    system_text: str | None = None
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    model_name: str = "default"

    def __post_init__(self) -> None:
        if not self.user_text:
            raise ValueError("user_text must be non-empty")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.max_tokens <= 0:
            raise ValueError(f"max_tokens must be positive, got {self.max_tokens}")


@dataclass(frozen=True)
class CompletionResult:
    """Provider answer plus bookkeeping (who answered, cache hit, latency)."""

    text: str
    provider_name: str
    cached: bool = False
    latency_ms: float = 0.0


class CompletionProvider(Protocol):
    name: str

    def complete(self, request: CompletionRequest) -> CompletionResult: ...


def complete(request: CompletionRequest, provider: CompletionProvider) -> CompletionResult:
    """Run one completion against the given provider."""
    return provider.complete(request)


# ---------------------------------------------------------------------------
# Mock provider


@dataclass(frozen=True)
class MockRule:
    pattern: str
    response: str


@dataclass(frozen=True)
class MockScript:
    """Ordered substring-match rules; the first whose pattern occurs in the
    request's user_text wins, else ``default_response``.

    Responses may contain the literal placeholder ``{user_text}``, replaced by
    the request's user text. That is the only substitution performed.
    """

    rules: tuple[MockRule, ...]
    default_response: str = ""

    @classmethod
    def from_file(cls, path: str | Path) -> "MockScript":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rules = tuple(MockRule(r["pattern"], r["response"]) for r in data.get("rules", []))
        return cls(rules=rules, default_response=data.get("default_response", ""))

    def respond(self, user_text: str) -> str:
        for rule in self.rules:
            if rule.pattern in user_text:
                return rule.response.replace("{user_text}", user_text)
        return self.default_response.replace("{user_text}", user_text)


class MockProvider:
    """Deterministic scripted provider; a pure function of (script, request)."""

    def __init__(self, script: MockScript, name: str = "mock") -> None:
        self.script = script
        self.name = name

    def complete(self, request: CompletionRequest) -> CompletionResult:
        started = time.perf_counter()
        text = self.script.respond(request.user_text)
        return CompletionResult(
            text=text,
            provider_name=self.name,
            cached=False,
            latency_ms=(time.perf_counter() - started) * 1000.0,
        )


# ---------------------------------------------------------------------------
# HTTP chat-completions provider


class HttpChatProvider:
    """Client for a chat-completions endpoint.

    Posts ``{model, messages, temperature, max_tokens}`` and reads the first
    choice's message content. Network and timeout failures are retried with
    exponential backoff (RETRY_ATTEMPTS total attempts); HTTP error statuses
    and malformed bodies fail immediately.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        name: str = "http",
        timeout: float = 60.0,
        backoff_base: float = 0.5,
        max_concurrent: int | None = None,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.api_key = api_key
        self.name = name
        self.timeout = timeout
        self.backoff_base = backoff_base
        self._session = session or requests.Session()
        self._limiter = (
            threading.BoundedSemaphore(max_concurrent) if max_concurrent else None
        )

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        return headers

    def _post(self, body: dict) -> requests.Response:
        if self._limiter is not None:
            with self._limiter:
                return self._session.post(
                    self.endpoint, json=body, headers=self._headers(), timeout=self.timeout
                )
        return self._session.post(
            self.endpoint, json=body, headers=self._headers(), timeout=self.timeout
        )

    def complete(self, request: CompletionRequest) -> CompletionResult:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        body = {
            "model": request.model_name,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

        started = time.perf_counter()
        response = None
        last_error: Exception | None = None
        for attempt in range(RETRY_ATTEMPTS):
            try:
                response = self._post(body)
                break
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_error = exc
                if attempt + 1 < RETRY_ATTEMPTS:
                    time.sleep(self.backoff_base * (2**attempt))
        if response is None:
            raise GatewayError(
                f"{self.name}: request failed after {RETRY_ATTEMPTS} attempts: {last_error}"
            )

        if not 200 <= response.status_code < 300:
            excerpt = response.text[:200]
            raise GatewayError(
                f"{self.name}: HTTP {response.status_code} from {self.endpoint}: {excerpt}"
            )
        try:
            data = response.json()
            text = data["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"{self.name}: malformed completion response: {exc}") from exc
        if not isinstance(text, str):
            raise GatewayError(f"{self.name}: non-text message content: {text!r}")

        return CompletionResult(
            text=text,
            provider_name=self.name,
            cached=False,
            latency_ms=(time.perf_counter() - started) * 1000.0,
        )


# ---------------------------------------------------------------------------
# Caching


def cache_key(provider_name: str, request: CompletionRequest) -> str:
    """Collision-free cache key over the fields that determine a response.

    JSON-encoding the field list keeps every boundary explicit, so no pair of
    distinct (system_text, user_text) combinations can collide by
    concatenation.
    """
    return json.dumps(
        [
            provider_name,
            request.model_name,
            request.temperature,
            request.system_text,
            request.user_text,
        ],
        ensure_ascii=True,
    )


class MemoryCacheStore:
    """In-process key-value store; writes serialized by a lock."""

    def __init__(self) -> None:
        self._data: dict[str, str] = {}
        self._lock = threading.Lock()

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, value: str) -> None:
        with self._lock:
            self._data[key] = value


class FileCacheStore:
    """JSON-file-backed store so caches persist across runs.

    The whole map is rewritten atomically (temp file + rename) on every put;
    fine at the request volumes this tool sees.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._data: dict[str, str] = {}
        if self.path.exists():
            try:
                self._data = json.loads(self.path.read_text(encoding="utf-8"))
            except (OSError, ValueError) as exc:
                logger.warning("cache file %s unreadable, starting empty: %s", self.path, exc)
                self._data = {}

    def get(self, key: str) -> str | None:
        with self._lock:
            return self._data.get(key)

    def put(self, key: str, value: str) -> None:
        with self._lock:
            self._data[key] = value
            tmp = self.path.with_suffix(self.path.suffix + ".tmp")
            tmp.parent.mkdir(parents=True, exist_ok=True)
            tmp.write_text(json.dumps(self._data, ensure_ascii=True), encoding="utf-8")
            tmp.replace(self.path)


class CachingProvider:
    """Wraps a provider so identical requests never hit it twice.

    Store trouble must never fail a run: get/put errors degrade to
    pass-through with a logged warning.
    """

    def __init__(self, inner: CompletionProvider, store) -> None:
        self.inner = inner
        self.store = store

    @property
    def name(self) -> str:
        return self.inner.name

    def complete(self, request: CompletionRequest) -> CompletionResult:
        key = cache_key(self.inner.name, request)
        try:
            hit = self.store.get(key)
        except Exception as exc:
            logger.warning("cache read failed, passing through: %s", exc)
            hit = None
        if hit is not None:
            return CompletionResult(
                text=hit, provider_name=self.inner.name, cached=True, latency_ms=0.0
            )
        result = self.inner.complete(request)
        try:
            self.store.put(key, result.text)
        except Exception as exc:
            logger.warning("cache write failed, result returned uncached: %s", exc)
        return result


def with_cache(provider: CompletionProvider, store) -> CachingProvider:
    """Wrap ``provider`` with memoization over ``store`` (get/put by string key)."""
    return CachingProvider(provider, store)


class CountingProvider:
    """Pass-through wrapper tracking call volume; used for per-run accounting."""

    def __init__(self, inner: CompletionProvider) -> None:
        self.inner = inner
        self.calls = 0
        self._lock = threading.Lock()

    @property
    def name(self) -> str:
        return self.inner.name

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.calls += 1
        return self.inner.complete(request)
