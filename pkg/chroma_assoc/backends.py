"""
Rating backends: anything that turns a (system, user) prompt pair into raw response text.

HttpChatBackend speaks the OpenAI-compatible chat-completion shape over httpx.
MockBackend answers offline from a known ground-truth function with seeded
noise, and refuses prompts that do not match the rating template.
"""

from __future__ import annotations

import logging
import os
import re
import threading
import time
import zlib
from dataclasses import dataclass
from typing import Any, Callable, Protocol, runtime_checkable

import httpx
import numpy as np

from chroma_assoc.errors import BackendError, ConfigurationError, ProtocolViolation

logger = logging.getLogger(__name__)

API_URL_ENV = "CHROMA_ASSOC_API_URL"
API_KEY_ENV = "CHROMA_ASSOC_API_KEY"
DEFAULT_API_URL = "https://api.openai.com/v1/chat/completions"
DEFAULT_TIMEOUT = 60.0

# Statuses worth another attempt; everything else fails fast
RETRYABLE_STATUS = (408, 409, 429, 500, 502, 503, 504)


@dataclass(frozen=True)
class BackendCapabilities:
    supports_temperature: bool = True
    deterministic_at_zero: bool = False


@runtime_checkable
class RatingBackend(Protocol):
    """Must tolerate concurrent calls to complete()."""

    capabilities: BackendCapabilities

    def complete(self, system: str, user: str, *, temperature: float, model_id: str) -> str: ...


@dataclass(frozen=True)
class ApiConfig:
    url: str
    api_key: str


def get_api_config(url: str | None = None, api_key: str | None = None) -> ApiConfig:
    """Endpoint and key from arguments, else env. A missing key is a configuration error."""
    url = (url or os.environ.get(API_URL_ENV, "").strip() or DEFAULT_API_URL).strip()
    api_key = (api_key or os.environ.get(API_KEY_ENV, "")).strip()
    if not api_key:
        raise ConfigurationError(f"{API_KEY_ENV} is not set; the http backend needs an API key")
    return ApiConfig(url=url, api_key=api_key)


def _parse_retry_after(value: str | None) -> float | None:
    """Parse a Retry-After header; seconds to wait, or None."""
    if not value or not value.strip():
        return None
    value = value.strip()
    try:
        return max(0.0, float(value))
    except ValueError:
        pass
    try:
        from email.utils import parsedate_to_datetime

        diff = parsedate_to_datetime(value).timestamp() - time.time()
        return max(1.0, diff) if diff > 0 else None
    except Exception:
        return None


def _extract_content(data: Any) -> str:
    try:
        content = data["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError) as e:
        raise BackendError(f"Malformed chat-completion response: {e!r}") from e
    if not isinstance(content, str):
        raise BackendError("Chat-completion response has no text content")
    return content


class HttpChatBackend:
    """Chat-completion client with connection pooling. Safe to share across worker threads."""

    capabilities = BackendCapabilities(supports_temperature=True, deterministic_at_zero=False)

    def __init__(
        self,
        config: ApiConfig,
        *,
        timeout: float = DEFAULT_TIMEOUT,
        transport: httpx.BaseTransport | None = None,
    ) -> None:
        self._config = config
        self._timeout = timeout
        self._transport = transport
        self._client: httpx.Client | None = None
        self._lock = threading.Lock()

    def _get_client(self) -> httpx.Client:
        with self._lock:
            if self._client is None or self._client.is_closed:
                self._client = httpx.Client(
                    timeout=self._timeout,
                    headers={
                        "Authorization": f"Bearer {self._config.api_key}",
                        "Content-Type": "application/json",
                    },
                    transport=self._transport,
                )
            return self._client

    def close(self) -> None:
        if self._client and not self._client.is_closed:
            self._client.close()

    def __enter__(self) -> "HttpChatBackend":
        return self

    def __exit__(self, *args: object) -> None:
        self.close()

    def complete(self, system: str, user: str, *, temperature: float, model_id: str) -> str:
        """One POST, no retries. Failures surface as BackendError carrying status and Retry-After."""
        payload = {
            "model": model_id,
            "temperature": temperature,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        }
        try:
            resp = self._get_client().post(self._config.url, json=payload)
            resp.raise_for_status()
        except httpx.HTTPStatusError as e:
            r = e.response
            raise BackendError(
                f"HTTP {r.status_code} from {self._config.url}",
                status_code=r.status_code,
                retry_after=_parse_retry_after(r.headers.get("retry-after")),
            ) from e
        except httpx.RequestError as e:
            raise BackendError(f"Request to {self._config.url} failed: {e}") from e
        try:
            data = resp.json()
        except ValueError as e:
            raise BackendError("Chat-completion response is not JSON") from e
        return _extract_content(data)


def is_retryable(exc: BaseException) -> bool:
    """Transport failures without a status, and throttling/server statuses, are retried."""
    if not isinstance(exc, BackendError):
        return False
    return exc.status_code is None or exc.status_code in RETRYABLE_STATUS


# Tail of every rating prompt; the mock reads concept and hex back out of it
_PROMPT_TAIL = re.compile(
    r"Concept: '(?P<concept>[^'\n]+)'\nColor: (?P<hex>#[0-9A-Fa-f]{6})\nAnswer with only the number:\s*\Z"
)

GroundTruth = Callable[[str, str], float]


class MockBackend:
    """
    Offline backend answering ground_truth(concept, hex) plus Gaussian noise.

    Noise sd is noise_sd * temperature, so temperature 0 is always
    deterministic. Each (concept, hex) key has its own RNG stream seeded from
    (seed, crc32(key)); the n-th call for a key always draws the n-th sample,
    whatever order threads arrive in.
    """

    capabilities = BackendCapabilities(supports_temperature=True, deterministic_at_zero=True)

    def __init__(self, ground_truth: GroundTruth, noise_sd: float = 0.0, seed: int = 0) -> None:
        if noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {noise_sd}")
        self._truth = ground_truth
        self._noise_sd = noise_sd
        self._seed = seed
        self._calls: dict[tuple[str, str], int] = {}
        self._lock = threading.Lock()
        self.requests = 0

    @staticmethod
    def parse_prompt(user: str) -> tuple[str, str]:
        m = _PROMPT_TAIL.search(user)
        if m is None:
            raise ProtocolViolation("Prompt does not end with the Concept/Color/Answer block")
        return m.group("concept"), m.group("hex").upper()

    def _noise(self, concept: str, hex_code: str, sd: float) -> float:
        key = (concept, hex_code)
        with self._lock:
            n = self._calls.get(key, 0)
            self._calls[key] = n + 1
            self.requests += 1
        if sd <= 0:
            return 0.0
        rng = np.random.default_rng([self._seed, zlib.crc32(f"{concept}\x00{hex_code}".encode("utf-8")), n])
        return float(rng.normal(0.0, sd))

    def complete(self, system: str, user: str, *, temperature: float, model_id: str) -> str:
        concept, hex_code = self.parse_prompt(user)
        value = float(self._truth(concept, hex_code))
        value += self._noise(concept, hex_code, self._noise_sd * temperature)
        return f"{min(1.0, max(0.0, value)):.3f}"


def mock_backend(ground_truth: GroundTruth, noise_sd: float = 0.0, seed: int = 0) -> MockBackend:
    return MockBackend(ground_truth, noise_sd=noise_sd, seed=seed)


def constant_backend(value: float, noise_sd: float = 0.0, seed: int = 0) -> MockBackend:
    return MockBackend(lambda _c, _h: value, noise_sd=noise_sd, seed=seed)


class RateLimiter:
    """Token bucket shared by worker threads. rate is requests per second; None disables."""

    def __init__(
        self,
        rate: float | None,
        burst: int = 1,
        *,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rate is not None and rate <= 0:
            raise ValueError(f"rate must be positive, got {rate}")
        self._rate = rate
        self._capacity = float(max(1, burst))
        self._tokens = self._capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        if self._rate is None:
            return
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self._capacity, self._tokens + (now - self._last) * self._rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self._rate
            self._sleep(wait)
