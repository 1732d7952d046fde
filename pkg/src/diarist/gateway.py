"""Provider-agnostic chat-completion access.

Three provider kinds share one interface: an HTTP client speaking the
OpenAI-compatible wire format (with retries, backoff and rate limiting),
a replay provider serving previously recorded responses bit-exact, and a
scripted provider for offline runs and tests. Requests are identified by a
canonical hash so recordings survive re-serialization.
"""

from __future__ import annotations

import hashlib
import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol

import httpx

from .errors import ConfigError, CredentialError, MissingRecordError, TransportError
from .tokencount import whitespace_tokens

logger = logging.getLogger(__name__)

ROLES = ("system", "user", "assistant")
RETRIABLE_STATUS = frozenset({408, 429}) | frozenset(range(500, 600))


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"invalid role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if not self.messages:
            raise ValueError("chat request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ChatResponse:
    content: str
    input_tokens: int
    output_tokens: int
    provider_latency: float = 0.0


def chat_request(
    model_id: str,
    user: str,
    system: str | None = None,
    temperature: float = 0.0,
    max_output_tokens: int = 2048,
) -> ChatRequest:
    messages: list[ChatMessage] = []
    if system:
        messages.append(ChatMessage("system", system))
    messages.append(ChatMessage("user", user))
    return ChatRequest(model_id, tuple(messages), temperature, max_output_tokens)


def request_hash(request: ChatRequest) -> str:
    """Stable identity: canonicalized messages + model + temperature."""
    canonical = json.dumps(
        {
            "model_id": request.model_id,
            "temperature": request.temperature,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Provider(Protocol):
    def send(self, request: ChatRequest) -> ChatResponse: ...


def send_chat(request: ChatRequest, provider: Provider) -> ChatResponse:
    return provider.send(request)


@dataclass
class RetryPolicy:
    max_attempts: int = 3
    base_backoff: float = 0.5

    def delay(self, attempt: int) -> float:
        # attempt is 1-based; delays are non-decreasing by construction
        return self.base_backoff * (2 ** (attempt - 1))


@dataclass
class ProviderConfig:
    name: str
    kind: str  # http_openai_compatible | replay | scripted
    base_url: str | None = None
    api_key_env: str | None = None
    record_path: str | None = None
    script: str | None = None
    retry: RetryPolicy = field(default_factory=RetryPolicy)
    max_in_flight: int = 1
    requests_per_minute: float | None = None
    timeout: float = 60.0

    def __post_init__(self) -> None:
        payloads = {
            "http_openai_compatible": self.base_url,
            "replay": self.record_path,
            "scripted": self.script,
        }
        if self.kind not in payloads:
            raise ConfigError(f"provider {self.name!r}: unknown kind {self.kind!r}")
        if payloads[self.kind] is None:
            raise ConfigError(f"provider {self.name!r}: kind {self.kind} needs its payload field")
        others = [v for k, v in payloads.items() if k != self.kind and v is not None]
        if others:
            raise ConfigError(f"provider {self.name!r}: exactly one kind-specific field may be set")


class _RateLimiter:
    """Enforces a minimum interval between calls; thread-safe."""

    def __init__(self, requests_per_minute: float | None, clock=time.monotonic, sleep=time.sleep):
        self._interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self._clock = clock
        self._sleep = sleep
        self._lock = threading.Lock()
        self._next_at = 0.0

    def wait(self) -> None:
        if self._interval <= 0:
            return
        with self._lock:
            now = self._clock()
            delay = self._next_at - now
            self._next_at = max(now, self._next_at) + self._interval
        if delay > 0:
            self._sleep(delay)


class HttpOpenAIProvider:
    """OpenAI-compatible /chat/completions client with bounded retries.

    Transient failures (timeouts, connection errors, 408/429/5xx) are retried
    with exponential backoff; 401/403 raise a non-retriable credential error.
    Every attempt is logged with the request hash; the API key never reaches
    logs or recordings.
    """

    def __init__(
        self,
        config: ProviderConfig,
        environ: Mapping[str, str] | None = None,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        import os

        env = environ if environ is not None else os.environ
        if not config.api_key_env:
            raise CredentialError(f"provider {config.name!r}: api_key_env not configured")
        key = env.get(config.api_key_env)
        if not key:
            raise CredentialError(
                f"provider {config.name!r}: environment variable {config.api_key_env} is not set"
            )
        self.config = config
        self._sleep = sleep
        self._in_flight = threading.Semaphore(max(1, config.max_in_flight))
        self._limiter = _RateLimiter(config.requests_per_minute, sleep=sleep)
        self._client = httpx.Client(
            base_url=config.base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {key}"},
            timeout=config.timeout,
            transport=transport,
        )

    def send(self, request: ChatRequest) -> ChatResponse:
        payload = {
            "model": request.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        rhash = request_hash(request)
        policy = self.config.retry
        attempts: list[str] = []
        with self._in_flight:
            for attempt in range(1, policy.max_attempts + 1):
                self._limiter.wait()
                started = time.monotonic()
                try:
                    response = self._client.post("/chat/completions", json=payload)
                except httpx.HTTPError as exc:
                    note = f"attempt {attempt}: transport failure: {type(exc).__name__}"
                    attempts.append(note)
                    logger.warning("chat %s %s", rhash[:12], note)
                else:
                    status = response.status_code
                    logger.info(
                        "chat %s attempt %d/%d -> %d", rhash[:12], attempt, policy.max_attempts, status
                    )
                    if status == 200:
                        return self._parse(response, time.monotonic() - started)
                    if status in (401, 403):
                        raise CredentialError(f"provider {self.config.name!r}: HTTP {status}")
                    attempts.append(f"attempt {attempt}: HTTP {status}")
                    if status not in RETRIABLE_STATUS:
                        raise TransportError(
                            f"non-retriable HTTP {status} from {self.config.name!r}", attempts
                        )
                if attempt < policy.max_attempts:
                    self._sleep(policy.delay(attempt))
        raise TransportError(
            f"provider {self.config.name!r}: {policy.max_attempts} attempts exhausted", attempts
        )

    @staticmethod
    def _parse(response: httpx.Response, latency: float) -> ChatResponse:
        data = response.json()
        try:
            content = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed completion payload: {exc}") from exc
        usage = data.get("usage") or {}
        return ChatResponse(
            content=content,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            provider_latency=latency,
        )

    def close(self) -> None:
        self._client.close()


class ReplayProvider:
    """Serves recorded responses keyed by request hash, bit-exact."""

    def __init__(self, record_path: str | Path) -> None:
        self._records: dict[str, ChatResponse] = {}
        path = Path(record_path)
        for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("partial"):
                raise ConfigError(f"{path}:{lineno}: record file is marked partial; re-record")
            self._records[rec["request_hash"]] = ChatResponse(
                content=rec["response_content"],
                input_tokens=int(rec.get("input_tokens", 0)),
                output_tokens=int(rec.get("output_tokens", 0)),
            )

    def __len__(self) -> int:
        return len(self._records)

    def send(self, request: ChatRequest) -> ChatResponse:
        rhash = request_hash(request)
        try:
            return self._records[rhash]
        except KeyError:
            raise MissingRecordError(f"no recorded response for request {rhash}") from None


ScriptHandler = Callable[[ChatRequest], str]

# Named handlers usable from config files ([provider.x] kind=scripted script=<name>).
SCRIPTS: dict[str, ScriptHandler] = {}


def register_script(name: str, handler: ScriptHandler) -> None:
    SCRIPTS[name] = handler


class ScriptedProvider:
    """Deterministic provider: responses come from a hash map and/or a handler."""

    def __init__(
        self,
        handler: ScriptHandler | None = None,
        responses: Mapping[str, str] | None = None,
        token_counter=whitespace_tokens,
    ) -> None:
        self._handler = handler
        self._responses = dict(responses or {})
        self._count = token_counter

    def send(self, request: ChatRequest) -> ChatResponse:
        rhash = request_hash(request)
        if rhash in self._responses:
            content = self._responses[rhash]
        elif self._handler is not None:
            content = self._handler(request)
        else:
            raise MissingRecordError(f"scripted provider has no response for request {rhash}")
        prompt_tokens = sum(self._count(m.content) for m in request.messages)
        return ChatResponse(content, prompt_tokens, self._count(content))


class RecordingSession:
    """Wraps a provider and persists every (hash, response) pair.

    If a write fails mid-session the file is stamped with a partial marker
    before the error propagates, so a later replay refuses to load it.
    """

    def __init__(self, provider: Provider, path: str | Path) -> None:
        self._provider = provider
        self._path = Path(path)
        self._fh = self._path.open("w", encoding="utf-8")

    def send(self, request: ChatRequest) -> ChatResponse:
        response = self._provider.send(request)
        record = {
            "request_hash": request_hash(request),
            "response_content": response.content,
            "input_tokens": response.input_tokens,
            "output_tokens": response.output_tokens,
        }
        try:
            self._fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
            self._fh.flush()
        except OSError:
            self._mark_partial()
            raise
        return response

    def _mark_partial(self) -> None:
        try:
            self._fh.write(json.dumps({"partial": True}) + "\n")
            self._fh.flush()
        except OSError:
            pass

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "RecordingSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def record_session(
    requests: Iterable[ChatRequest], provider: Provider, out_path: str | Path
) -> Path:
    """Send every request through provider, persisting a replayable record file."""
    with RecordingSession(provider, out_path) as session:
        for request in requests:
            session.send(request)
    return Path(out_path)


def build_provider(
    config: ProviderConfig,
    environ: Mapping[str, str] | None = None,
    transport: httpx.BaseTransport | None = None,
) -> Provider:
    if config.kind == "http_openai_compatible":
        return HttpOpenAIProvider(config, environ=environ, transport=transport)
    if config.kind == "replay":
        return ReplayProvider(config.record_path)  # type: ignore[arg-type]
    handler = SCRIPTS.get(config.script or "")
    if handler is None:
        raise ConfigError(f"provider {config.name!r}: unknown script {config.script!r}")
    return ScriptedProvider(handler=handler)
