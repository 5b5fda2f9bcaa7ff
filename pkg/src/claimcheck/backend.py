"""Wire protocol and client for all remote model backends.

Every model call in the pipeline goes through BackendClient: HTTP POST with a
JSON body to {base_url}/v1/complete or /v1/classify_nli. Responses are cached
on disk keyed by a digest of the canonicalized request, so a rerun with a warm
cache performs zero network calls and returns byte-identical payloads.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Iterable, Mapping

import requests

from claimcheck.core import HallucinationLabel

logger = logging.getLogger(__name__)

CACHE_DIR_ENV = "REFCHECK_CACHE_DIR"
DEFAULT_CACHE_DIR = ".claimcheck_cache"
_SCORE_SUM_TOL = 1e-6


class UnknownBackendError(ValueError):
    """Raised for a backend_id absent from the client's configuration."""


class BackendUnreachableError(RuntimeError):
    """Raised when no valid HTTP reply could be obtained, after retries."""


class MalformedBackendReplyError(RuntimeError):
    """Raised when a backend's JSON body violates the response schema."""


class BackendTask(str, Enum):
    COMPLETE = "complete"
    CLASSIFY_NLI = "classify_nli"


@dataclass(frozen=True)
class BackendSpec:
    """One configured backend endpoint."""

    backend_id: str
    base_url: str
    auth_token_env: str | None = None


@dataclass(frozen=True)
class RetryPolicy:
    """Exponential backoff schedule for transient failures."""

    max_attempts: int = 3
    base_delay: float = 0.5
    factor: float = 2.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be at least 1")
        if self.base_delay < 0 or self.factor < 1:
            raise ValueError("delays must be non-negative and non-decreasing")

    def delay_before_attempt(self, attempt: int) -> float:
        """Delay to sleep before retry number `attempt` (first attempt is 0)."""
        return self.base_delay * self.factor ** (attempt - 1)


@dataclass(frozen=True)
class BackendRequest:
    backend_id: str
    task: BackendTask
    payload: Mapping

    def __post_init__(self) -> None:
        object.__setattr__(self, "task", BackendTask(self.task))

    @staticmethod
    def complete(backend_id: str, prompt: str, max_tokens: int, temperature: float):
        if max_tokens < 1:
            raise ValueError("max_tokens must be positive")
        if temperature < 0:
            raise ValueError("temperature must be non-negative")
        payload = {"prompt": prompt, "max_tokens": int(max_tokens),
                   "temperature": float(temperature)}
        return BackendRequest(backend_id, BackendTask.COMPLETE, payload)

    @staticmethod
    def classify_nli(backend_id: str, premise: str, hypothesis: str):
        payload = {"premise": premise, "hypothesis": hypothesis}
        return BackendRequest(backend_id, BackendTask.CLASSIFY_NLI, payload)


@dataclass(frozen=True)
class CompleteResult:
    text: str


@dataclass(frozen=True)
class NliResult:
    label: HallucinationLabel
    scores: tuple[float, float, float]


BackendResponse = CompleteResult | NliResult


def _canonicalize(value):
    """Sort object keys and normalize line endings in strings, recursively."""
    if isinstance(value, str):
        return value.replace("\r\n", "\n").replace("\r", "\n")
    if isinstance(value, Mapping):
        return {k: _canonicalize(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_canonicalize(v) for v in value]
    return value


def cache_key(request: BackendRequest) -> str:
    """Hex digest identifying a request; identical requests share a key."""
    canonical = {
        "backend_id": request.backend_id,
        "task": request.task.value,
        "payload": _canonicalize(dict(request.payload)),
    }
    blob = json.dumps(canonical, sort_keys=True, ensure_ascii=False,
                      separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def resolve_cache_dir(configured: str | None = None) -> Path:
    """Cache location: REFCHECK_CACHE_DIR env var wins over config over default."""
    env = os.environ.get(CACHE_DIR_ENV)
    if env:
        return Path(env)
    if configured:
        return Path(configured)
    return Path(DEFAULT_CACHE_DIR)


class ResponseCache:
    """Append-only on-disk store: one file per request digest, raw reply bytes."""

    def __init__(self, directory: str | Path):
        self._dir = Path(directory)
        self._dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, digest: str) -> Path:
        return self._dir / f"{digest}.json"

    def get(self, digest: str) -> str | None:
        path = self._path(digest)
        try:
            return path.read_text(encoding="utf-8")
        except FileNotFoundError:
            return None

    def put(self, digest: str, raw: str) -> None:
        path = self._path(digest)
        with self._lock:
            if path.exists():
                return
            fd, tmp_name = tempfile.mkstemp(dir=self._dir, suffix=".tmp")
            try:
                with os.fdopen(fd, "w", encoding="utf-8") as handle:
                    handle.write(raw)
                os.replace(tmp_name, path)
            except BaseException:
                try:
                    os.unlink(tmp_name)
                except OSError:
                    pass
                raise


class _TransportFailure(Exception):
    """Internal marker for retryable transport-level problems."""


def default_transport(url: str, body: Mapping, headers: Mapping, timeout: float):
    """POST JSON over HTTP; returns (status_code, body text)."""
    try:
        reply = requests.post(url, json=body, headers=dict(headers), timeout=timeout)
    except requests.RequestException as exc:
        raise _TransportFailure(str(exc)) from exc
    return reply.status_code, reply.text


def _validate_body(task: BackendTask, body) -> BackendResponse:
    if not isinstance(body, Mapping):
        raise MalformedBackendReplyError("reply body is not a JSON object")
    if task is BackendTask.COMPLETE:
        text = body.get("text")
        if not isinstance(text, str):
            raise MalformedBackendReplyError("complete reply must carry a string 'text'")
        return CompleteResult(text=text)
    label_raw = body.get("label")
    try:
        label = HallucinationLabel(label_raw)
    except ValueError:
        raise MalformedBackendReplyError(
            f"classify_nli reply has unknown label {label_raw!r}"
        ) from None
    scores = body.get("scores")
    if (not isinstance(scores, list) or len(scores) != 3
            or any(isinstance(s, bool) or not isinstance(s, (int, float)) for s in scores)):
        raise MalformedBackendReplyError("classify_nli reply needs 3 numeric scores")
    values = tuple(float(s) for s in scores)
    if any(v < 0 or v != v for v in values):
        raise MalformedBackendReplyError("classify_nli scores must be non-negative numbers")
    if abs(sum(values) - 1.0) > _SCORE_SUM_TOL:
        raise MalformedBackendReplyError(
            f"classify_nli scores must sum to 1, got {sum(values)!r}"
        )
    return NliResult(label=label, scores=values)


class BackendClient:
    """Cached, retrying client over every configured backend.

    Safe for concurrent use: the cache serializes writes and all other state
    is immutable. Only transport exceptions and HTTP 429/5xx are retried;
    other statuses fail fast, and a malformed body is never retried.
    """

    def __init__(
        self,
        backends: Mapping[str, BackendSpec] | Iterable[BackendSpec],
        cache_dir: str | Path | None = None,
        retry: RetryPolicy = RetryPolicy(),
        transport: Callable | None = None,
        parallelism: int = 4,
        timeout: float = 60.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        if not isinstance(backends, Mapping):
            backends = {spec.backend_id: spec for spec in backends}
        self._backends = dict(backends)
        self._cache = ResponseCache(resolve_cache_dir(
            str(cache_dir) if cache_dir is not None else None
        ))
        self._retry = retry
        self._transport = transport if transport is not None else default_transport
        if parallelism < 1:
            raise ValueError("parallelism must be at least 1")
        self.parallelism = parallelism
        self._timeout = timeout
        self._sleep = sleep

    def _headers(self, spec: BackendSpec) -> dict:
        headers = {"Content-Type": "application/json"}
        if spec.auth_token_env:
            token = os.environ.get(spec.auth_token_env)
            if token is None:
                raise ValueError(
                    f"backend {spec.backend_id!r} expects a token in unset "
                    f"env var {spec.auth_token_env!r}"
                )
            headers["Authorization"] = f"Bearer {token}"
        return headers

    def _fetch(self, spec: BackendSpec, request: BackendRequest) -> str:
        url = spec.base_url.rstrip("/") + "/v1/" + request.task.value
        headers = self._headers(spec)
        body = dict(request.payload)
        last_problem = ""
        for attempt in range(self._retry.max_attempts):
            if attempt > 0:
                self._sleep(self._retry.delay_before_attempt(attempt))
            try:
                status, text = self._transport(url, body, headers, self._timeout)
            except _TransportFailure as exc:
                last_problem = str(exc)
                logger.debug("attempt %d against %s failed: %s", attempt + 1, url, exc)
                continue
            if status == 200:
                return text
            if status == 429 or 500 <= status <= 599:
                last_problem = f"HTTP {status}"
                logger.debug("attempt %d against %s got %s", attempt + 1, url, status)
                continue
            raise BackendUnreachableError(
                f"backend {spec.backend_id!r} replied HTTP {status} at {url}"
            )
        raise BackendUnreachableError(
            f"backend {spec.backend_id!r} unreachable after "
            f"{self._retry.max_attempts} attempts: {last_problem}"
        )

    def call(self, request: BackendRequest) -> BackendResponse:
        """Return the (possibly cached) validated response for one request."""
        spec = self._backends.get(request.backend_id)
        if spec is None:
            known = ", ".join(sorted(self._backends)) or "none"
            raise UnknownBackendError(
                f"backend {request.backend_id!r} is not configured (known: {known})"
            )
        digest = cache_key(request)
        raw = self._cache.get(digest)
        if raw is None:
            raw = self._fetch(spec, request)
            try:
                body = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise MalformedBackendReplyError(f"reply is not JSON: {exc}") from None
            result = _validate_body(request.task, body)
            self._cache.put(digest, raw)
            return result
        try:
            body = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedBackendReplyError(f"cached reply is not JSON: {exc}") from None
        return _validate_body(request.task, body)

    def complete(self, backend_id: str, prompt: str, max_tokens: int = 1024,
                 temperature: float = 0.0) -> str:
        request = BackendRequest.complete(backend_id, prompt, max_tokens, temperature)
        result = self.call(request)
        assert isinstance(result, CompleteResult)
        return result.text

    def classify_nli(self, backend_id: str, premise: str, hypothesis: str) -> NliResult:
        request = BackendRequest.classify_nli(backend_id, premise, hypothesis)
        result = self.call(request)
        assert isinstance(result, NliResult)
        return result

    def map_parallel(self, fn: Callable, items: Iterable) -> list:
        """Apply fn over items with bounded parallelism, preserving order."""
        items = list(items)
        if self.parallelism == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=self.parallelism) as pool:
            return list(pool.map(fn, items))
