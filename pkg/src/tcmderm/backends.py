"""Uniform multimodal chat-completion layer over remote services and a mock.

One generic JSON wire schema with a per-service adapter seam (`protocol`).
Retries apply only to transport errors, timeouts, and 5xx replies, with
exponential backoff; 4xx never retries.  Credential values are read from the
environment at call time and never appear in errors or traces.  Every
backend enforces an optional per-backend concurrent-request limit.
"""

from __future__ import annotations

import base64
import hashlib
import json
import math
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

import httpx

VALID_MIMES = {"image/png", "image/jpeg"}
VALID_ROLES = {"system", "user", "assistant"}


class BackendError(Exception):
    """Base class for backend failures."""


class AuthError(BackendError):
    """Credential missing from the environment or rejected by the service."""


class BackendTimeoutError(BackendError):
    """No successful response within the retry budget."""


class ProtocolError(BackendError):
    """The service reply could not be interpreted."""


class ServiceError(BackendError):
    """The service rejected the request or kept failing."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    mime: str

    def __post_init__(self) -> None:
        if self.mime not in VALID_MIMES:
            raise ValueError(f"unsupported image mime {self.mime!r}")


Part = TextPart | ImagePart


@dataclass(frozen=True)
class Message:
    role: str
    parts: tuple[Part, ...]

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"unknown role {self.role!r}")

    @property
    def text(self) -> str:
        return "\n".join(p.text for p in self.parts if isinstance(p, TextPart))


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    max_output_tokens: int = 1024
    temperature: float = 0.0
    request_tag: str = ""

    def __post_init__(self) -> None:
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("ChatRequest needs at least one user message")
        if not math.isfinite(self.temperature) or self.temperature < 0:
            raise ValueError("temperature must be finite and >= 0")

    @property
    def text(self) -> str:
        return "\n".join(m.text for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    backend_id: str
    latency: float
    token_usage: dict[str, int] | None = None


@dataclass(frozen=True)
class BackendConfig:
    backend_id: str
    endpoint: str = "mock"
    credential_env: str | None = None
    timeout: float = 60.0
    max_retries: int = 2
    backoff_base: float = 0.5
    max_concurrency: int | None = None
    protocol: str = "generic"
    script: Mapping[str, str] | None = field(default=None, hash=False, compare=False)

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def fingerprint(request: ChatRequest) -> str:
    """Stable digest over roles, text parts, and image bytes of a request."""
    h = hashlib.sha256()
    for msg in request.messages:
        h.update(msg.role.encode())
        h.update(b"\x1f")
        for part in msg.parts:
            if isinstance(part, TextPart):
                h.update(b"t:")
                h.update(part.text.encode("utf-8"))
            else:
                h.update(b"i:")
                h.update(part.mime.encode())
                h.update(hashlib.sha256(part.data).digest())
            h.update(b"\x1e")
    return "fp:" + h.hexdigest()


class TraceRecorder:
    """Appends one JSON line per completed call: tag, backend, latency, outcome."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def record(self, tag: str, backend_id: str, latency: float, outcome: str) -> None:
        line = json.dumps(
            {"tag": tag, "backend": backend_id, "latency_ms": round(latency * 1000, 3),
             "outcome": outcome},
            sort_keys=True,
        )
        with self._lock:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")

    def count(self) -> int:
        if not self.path.exists():
            return 0
        return sum(1 for _ in self.path.open(encoding="utf-8"))


class Backend:
    """Base backend: admission gate plus tracing around `_complete_once`."""

    def __init__(self, config: BackendConfig, trace: TraceRecorder | None = None):
        self.config = config
        self.backend_id = config.backend_id
        self.trace = trace
        self._gate = (
            threading.BoundedSemaphore(config.max_concurrency)
            if config.max_concurrency
            else None
        )

    def complete(self, request: ChatRequest) -> ChatResponse:
        start = time.monotonic()
        outcome = "error"
        if self._gate:
            self._gate.acquire()
        try:
            response = self._complete_once(request)
            outcome = "ok"
            return response
        finally:
            if self._gate:
                self._gate.release()
            if self.trace:
                self.trace.record(
                    request.request_tag, self.backend_id, time.monotonic() - start, outcome
                )

    def _complete_once(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError


class MockBackend(Backend):
    """Deterministic scripted backend.

    Script lookup order: exact request tag, then the tag suffix after the
    last "/" (one entry can serve a whole batch), then the request
    fingerprint is echoed so tests can assert on prompt content.
    """

    def __init__(
        self,
        config: BackendConfig,
        *,
        on_request: Callable[[ChatRequest], None] | None = None,
        latency: float = 0.0,
        trace: TraceRecorder | None = None,
    ):
        super().__init__(config, trace=trace)
        self.script = dict(config.script or {})
        self.on_request = on_request
        self.latency = latency
        self.calls: list[tuple[str, ChatRequest]] = []
        self._calls_lock = threading.Lock()

    def _complete_once(self, request: ChatRequest) -> ChatResponse:
        with self._calls_lock:
            self.calls.append((request.request_tag, request))
        if self.on_request:
            self.on_request(request)
        if self.latency:
            time.sleep(self.latency)
        tag = request.request_tag
        text = self.script.get(tag)
        if text is None and "/" in tag:
            text = self.script.get(tag.rsplit("/", 1)[-1])
        if text is None:
            text = fingerprint(request)
        return ChatResponse(text=text, backend_id=self.backend_id, latency=self.latency)


def mock_with_script(script: Mapping[str, str], backend_id: str = "mock") -> BackendConfig:
    """Config for a deterministic scripted backend."""
    if not script:
        raise ValueError("mock script must be non-empty")
    return BackendConfig(backend_id=backend_id, endpoint="mock", script=dict(script))


def _encode_generic(request: ChatRequest, backend_id: str) -> dict:
    messages = []
    for msg in request.messages:
        content: list[dict] = []
        for part in msg.parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                content.append(
                    {
                        "type": "image",
                        "mime": part.mime,
                        "data_base64": base64.b64encode(part.data).decode("ascii"),
                    }
                )
        messages.append({"role": msg.role, "content": content})
    return {
        "model": backend_id,
        "messages": messages,
        "max_tokens": request.max_output_tokens,
        "temperature": request.temperature,
    }


def _encode_openai(request: ChatRequest, backend_id: str) -> dict:
    body = _encode_generic(request, backend_id)
    for msg in body["messages"]:
        for part in msg["content"]:
            if part["type"] == "image":
                data_url = f"data:{part.pop('mime')};base64,{part.pop('data_base64')}"
                part["type"] = "image_url"
                part["image_url"] = {"url": data_url}
    return body


def _decode_reply(payload: Any) -> str:
    if isinstance(payload, dict):
        if isinstance(payload.get("text"), str):
            return payload["text"]
        choices = payload.get("choices")
        if isinstance(choices, list) and choices:
            message = choices[0].get("message", {})
            if isinstance(message.get("content"), str):
                return message["content"]
    raise ProtocolError("service reply carries no text field")


_ENCODERS = {"generic": _encode_generic, "openai": _encode_openai}


class HttpBackend(Backend):
    def __init__(
        self,
        config: BackendConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        trace: TraceRecorder | None = None,
    ):
        super().__init__(config, trace=trace)
        if config.protocol not in _ENCODERS:
            raise ValueError(f"unknown backend protocol {config.protocol!r}")
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.credential_env:
            credential = os.environ.get(self.config.credential_env)
            if not credential:
                raise AuthError(
                    f"credential env var {self.config.credential_env} is not set"
                )
            headers["Authorization"] = f"Bearer {credential}"
        return headers

    def _complete_once(self, request: ChatRequest) -> ChatResponse:
        headers = self._headers()  # raises AuthError before any network call
        body = _ENCODERS[self.config.protocol](request, self.backend_id)
        attempts = 1 + self.config.max_retries
        last_error: BackendError | None = None
        start = time.monotonic()
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.config.backoff_base * (2 ** (attempt - 1)))
            try:
                reply = self._client.post(self.config.endpoint, json=body, headers=headers)
            except httpx.TimeoutException:
                last_error = BackendTimeoutError(
                    f"backend {self.backend_id} timed out (attempt {attempt + 1})"
                )
                continue
            except httpx.TransportError as exc:
                last_error = ServiceError(f"transport failure: {type(exc).__name__}")
                continue
            if reply.status_code >= 500:
                last_error = ServiceError(f"service returned {reply.status_code}")
                continue
            if reply.status_code in (401, 403):
                raise AuthError(f"credential rejected ({reply.status_code})")
            if reply.status_code >= 400:
                raise ServiceError(f"service rejected request ({reply.status_code})")
            try:
                payload = reply.json()
            except json.JSONDecodeError as exc:
                raise ProtocolError(f"service reply is not JSON: {exc}") from exc
            return ChatResponse(
                text=_decode_reply(payload),
                backend_id=self.backend_id,
                latency=time.monotonic() - start,
                token_usage=payload.get("usage") if isinstance(payload, dict) else None,
            )
        assert last_error is not None
        raise last_error


def make_backend(
    config: BackendConfig,
    *,
    transport: httpx.BaseTransport | None = None,
    trace: TraceRecorder | None = None,
) -> Backend:
    if config.endpoint == "mock":
        return MockBackend(config, trace=trace)
    return HttpBackend(config, transport=transport, trace=trace)


_instances: dict[str, Backend] = {}
_instances_lock = threading.Lock()


def complete(
    config: BackendConfig,
    request: ChatRequest,
    *,
    transport: httpx.BaseTransport | None = None,
) -> ChatResponse:
    """Complete against the backend for this config (one instance per backend_id)."""
    with _instances_lock:
        backend = _instances.get(config.backend_id)
        if backend is None or backend.config is not config:
            backend = make_backend(config, transport=transport)
            _instances[config.backend_id] = backend
    return backend.complete(request)
