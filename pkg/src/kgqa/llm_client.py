"""Chat-completion client for OpenAI-compatible endpoints, plus an offline fake."""
from __future__ import annotations

import logging
import os
import random
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence, Union

import httpx

log = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 429, 500, 502, 503, 504})


class LlmError(Exception):
    pass


class TransportError(LlmError):
    """Network failure that persisted through every retry."""


class EndpointError(LlmError):
    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"endpoint returned HTTP {status}: {body[:200]}")


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-5-mini"
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    price_per_input_token: float = 0.0
    price_per_output_token: float = 0.0
    temperature: float | None = None

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.price_per_input_token < 0 or self.price_per_output_token < 0:
            raise ValueError("prices must be >= 0")

    def cost(self, input_tokens: int, output_tokens: int) -> float:
        return input_tokens * self.price_per_input_token + output_tokens * self.price_per_output_token


@dataclass(frozen=True)
class LlmResponse:
    text: str
    input_tokens: int
    output_tokens: int
    latency: float
    estimated_cost: float


class ChatClient(Protocol):
    config: LlmConfig

    def complete(self, system_prompt: str, user_prompt: str) -> LlmResponse: ...


def backoff_delays(max_retries: int, initial: float = 0.5, jitter: float = 0.2, rng: random.Random | None = None) -> list[float]:
    """Sleep durations before each retry: doubling from ``initial``, jittered by +/- ``jitter``."""
    rng = rng or random.Random()
    return [initial * 2**i * (1 + rng.uniform(-jitter, jitter)) for i in range(max_retries)]


class OpenAICompatClient:
    """Blocking client for ``POST <base_url>/chat/completions``.

    Shareable across threads; each call is independent.
    """

    def __init__(
        self,
        config: LlmConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        rng: random.Random | None = None,
    ):
        self.config = config
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._http = httpx.Client(timeout=config.timeout, transport=transport)

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def complete(self, system_prompt: str, user_prompt: str) -> LlmResponse:
        cfg = self.config
        body: dict = {
            "model": cfg.model_name,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
        }
        if cfg.temperature is not None:
            body["temperature"] = cfg.temperature
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        delays = backoff_delays(cfg.max_retries, rng=self._rng)
        last_exc: Exception | None = None
        t0 = time.perf_counter()
        for attempt in range(cfg.max_retries + 1):
            try:
                resp = self._http.post(url, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_exc = exc
                log.warning("chat completion attempt %d failed: %r", attempt + 1, exc)
            else:
                if resp.is_success:
                    return self._parse(resp.json(), time.perf_counter() - t0)
                if resp.status_code not in RETRYABLE_STATUS:
                    raise EndpointError(resp.status_code, resp.text)
                last_exc = EndpointError(resp.status_code, resp.text)
                log.warning("chat completion attempt %d got HTTP %d", attempt + 1, resp.status_code)
            if attempt < cfg.max_retries:
                self._sleep(delays[attempt])
        if isinstance(last_exc, EndpointError):
            raise last_exc
        raise TransportError(f"{url} unreachable after {cfg.max_retries + 1} attempts: {last_exc!r}")

    def _parse(self, payload: dict, latency: float) -> LlmResponse:
        try:
            text = payload["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise EndpointError(200, f"unexpected response shape: {str(payload)[:200]}") from None
        usage = payload.get("usage") or {}
        n_in = int(usage.get("prompt_tokens", 0))
        n_out = int(usage.get("completion_tokens", 0))
        return LlmResponse(text, n_in, n_out, latency, self.config.cost(n_in, n_out))

    def close(self) -> None:
        self._http.close()


def approx_tokens(text: str) -> int:
    return len(text.split())


Script = Union[Sequence[str], Callable[[str, str], str]]


@dataclass
class FakeLlmClient:
    """Scripted stand-in for :class:`OpenAICompatClient`.

    ``script`` is either a list of completions returned in order (the last one
    repeats) or a callable ``(system_prompt, user_prompt) -> text``. Token counts
    are whitespace word counts.
    """

    script: Script
    config: LlmConfig = field(default_factory=LlmConfig)
    calls: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        self._lock = threading.Lock()

    def complete(self, system_prompt: str, user_prompt: str) -> LlmResponse:
        with self._lock:
            idx = len(self.calls)
            self.calls.append((system_prompt, user_prompt))
        if callable(self.script):
            text = self.script(system_prompt, user_prompt)
        else:
            if not self.script:
                raise TransportError("fake client has no scripted responses")
            text = self.script[min(idx, len(self.script) - 1)]
        n_in = approx_tokens(system_prompt) + approx_tokens(user_prompt)
        n_out = approx_tokens(text)
        return LlmResponse(text, n_in, n_out, 0.0, self.config.cost(n_in, n_out))
