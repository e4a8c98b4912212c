"""Dispatch of chat requests to pluggable generation backends.

Backends are registered under string ids and share one blocking call
interface. ``generate_batch`` fans out over a bounded thread pool and
returns results positionally aligned with the requests; per-request
failures are isolated as error descriptors, never raised. Successful
generations are cached on disk so reruns make no backend calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import requests

from .prompting import ChatMessage, validate_message_sequence

logger = logging.getLogger(__name__)


class BackendKind(str, Enum):
    LOCAL_ENGINE = "LOCAL_ENGINE"
    REMOTE_API = "REMOTE_API"
    MOCK = "MOCK"


@dataclass(frozen=True)
class BackendDescriptor:
    id: str
    kind: BackendKind
    model_name: str
    size_billion_params: float | None = None


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[ChatMessage, ...]
    backend_id: str
    max_new_tokens: int = 256
    temperature: float = 0.0
    seed: int | None = None
    # Identity used for positional-alignment checks; generate_batch assigns
    # the request index when left empty.
    request_id: str = ""

    def __post_init__(self):
        if self.max_new_tokens <= 0:
            raise ValueError("max_new_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        validate_message_sequence(list(self.messages))


@dataclass(frozen=True)
class GenerationResult:
    text: str
    request_id: str
    latency_ms: float
    backend_id: str
    error: str | None = None


class TransportError(RuntimeError):
    """Raised by backend implementations on retriable transport failures."""


class MockBackend:
    """Deterministic test backend: canned table lookup with a mode fallback.

    Modes: ``echo`` returns the final user message, ``fixed`` returns a
    constant string, ``fail`` raises a transport error. A lookup table
    (final user message -> canned output) takes precedence over the mode.
    """

    def __init__(
        self,
        mode: str = "echo",
        fixed_text: str = "",
        table: dict[str, str] | None = None,
    ):
        if mode not in ("echo", "fixed", "fail"):
            raise ValueError(f"unknown mock mode {mode!r}")
        self.mode = mode
        self.fixed_text = fixed_text
        self.table = dict(table) if table else {}
        self.call_count = 0

    def complete(self, request: GenerationRequest) -> str:
        self.call_count += 1
        prompt = request.messages[-1].content
        if prompt in self.table:
            return self.table[prompt]
        if self.mode == "echo":
            return prompt
        if self.mode == "fixed":
            return self.fixed_text
        raise TransportError("mock backend configured to fail")


def load_mock_table(path: str | Path) -> dict[str, str]:
    """Read a mock lookup table: one ``{"input", "output"}`` record per line."""
    table: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            obj = json.loads(raw)
            if "input" not in obj or "output" not in obj:
                raise ValueError(f"{path}:{lineno}: mock table record needs 'input' and 'output'")
            table[obj["input"]] = obj["output"]
    return table


class HttpBackend:
    """Chat-completion backend over an HTTP endpoint (local engine or remote API)."""

    def __init__(
        self,
        endpoint: str,
        model_name: str,
        auth_env: str | None = None,
        timeout_s: float = 60.0,
    ):
        self.endpoint = endpoint
        self.model_name = model_name
        self.auth_env = auth_env
        self.timeout_s = timeout_s

    def complete(self, request: GenerationRequest) -> str:
        payload: dict = {
            "model": self.model_name,
            "messages": [{"role": m.role.value, "content": m.content} for m in request.messages],
            "max_tokens": request.max_new_tokens,
            "temperature": request.temperature,
        }
        if request.seed is not None:
            payload["seed"] = request.seed
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if not token:
                raise TransportError(f"auth environment variable {self.auth_env} is not set")
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = requests.post(
                self.endpoint, json=payload, headers=headers, timeout=self.timeout_s
            )
        except requests.RequestException as exc:
            raise TransportError(f"request failed: {exc}") from exc
        if response.status_code >= 500:
            raise TransportError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise TransportError(f"unexpected status {response.status_code}: {response.text[:200]}")
        try:
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion response: {exc}") from exc


class ResponseCache:
    """Content-addressed cache of successful generations.

    The key is the SHA-256 of the canonical JSON of (backend id, model
    name, messages, decoding parameters); each entry is one JSON file
    named after the key, written atomically.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    @staticmethod
    def key_for(request: GenerationRequest, model_name: str) -> str:
        material = json.dumps(
            {
                "backend_id": request.backend_id,
                "model_name": model_name,
                "messages": [[m.role.value, m.content] for m in request.messages],
                "max_new_tokens": request.max_new_tokens,
                "temperature": request.temperature,
                "seed": request.seed,
            },
            ensure_ascii=False,
            sort_keys=True,
        )
        return hashlib.sha256(material.encode("utf-8")).hexdigest()

    def get(self, key: str) -> str | None:
        path = self.directory / f"{key}.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["text"]

    def put(self, key: str, text: str) -> None:
        path = self.directory / f"{key}.json"
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"text": text}, ensure_ascii=False), encoding="utf-8")
        os.replace(tmp, path)


@dataclass
class _Registered:
    descriptor: BackendDescriptor
    impl: object
    retries: int = 3
    backoff_s: float = 0.5


@dataclass
class Gateway:
    """Backend registry plus the shared generate / generate_batch entry points."""

    cache: ResponseCache | None = None
    _backends: dict[str, _Registered] = field(default_factory=dict)
    dispatch_count: int = 0
    _count_lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def register(
        self,
        descriptor: BackendDescriptor,
        impl,
        retries: int = 3,
        backoff_s: float = 0.5,
    ) -> None:
        if descriptor.id in self._backends:
            raise ValueError(f"backend id {descriptor.id!r} already registered")
        self._backends[descriptor.id] = _Registered(descriptor, impl, retries, backoff_s)

    def descriptor(self, backend_id: str) -> BackendDescriptor:
        return self._backends[backend_id].descriptor

    def generate(self, request: GenerationRequest) -> GenerationResult:
        """Run one request; failures come back as error descriptors, not raises."""
        registered = self._backends.get(request.backend_id)
        if registered is None:
            return GenerationResult(
                text="",
                request_id=request.request_id,
                latency_ms=0.0,
                backend_id=request.backend_id,
                error=f"unknown backend: {request.backend_id!r}",
            )
        key = None
        if self.cache is not None:
            key = ResponseCache.key_for(request, registered.descriptor.model_name)
            cached = self.cache.get(key)
            if cached is not None:
                return GenerationResult(cached, request.request_id, 0.0, request.backend_id)

        start = time.perf_counter()
        last_error = "no attempts made"
        for attempt in range(registered.retries + 1):
            if attempt:
                time.sleep(registered.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._count_lock:
                    self.dispatch_count += 1
                text = registered.impl.complete(request)
            except TransportError as exc:
                last_error = str(exc)
                logger.debug("backend %s attempt %d failed: %s", request.backend_id, attempt + 1, exc)
                continue
            latency_ms = (time.perf_counter() - start) * 1000.0
            if self.cache is not None and key is not None:
                self.cache.put(key, text)
            return GenerationResult(text, request.request_id, latency_ms, request.backend_id)
        latency_ms = (time.perf_counter() - start) * 1000.0
        return GenerationResult(
            text="",
            request_id=request.request_id,
            latency_ms=latency_ms,
            backend_id=request.backend_id,
            error=f"transport failure after {registered.retries + 1} attempts: {last_error}",
        )

    def generate_batch(
        self, requests_: list[GenerationRequest], max_in_flight: int
    ) -> list[GenerationResult]:
        """Run many requests with at most max_in_flight outstanding.

        Results align positionally with the input list regardless of
        completion order.
        """
        if max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if not requests_:
            return []
        indexed = [
            req if req.request_id else _with_request_id(req, str(i))
            for i, req in enumerate(requests_)
        ]
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(self.generate, indexed))


def _with_request_id(request: GenerationRequest, request_id: str) -> GenerationRequest:
    return GenerationRequest(
        messages=request.messages,
        backend_id=request.backend_id,
        max_new_tokens=request.max_new_tokens,
        temperature=request.temperature,
        seed=request.seed,
        request_id=request_id,
    )
