"""Client for OpenAI-compatible ``/chat/completions`` endpoints."""

from __future__ import annotations

import logging
import os
import threading
import time
from typing import Callable, Sequence

import httpx

from ..core import Message
from .base import BackendError, ChatBackend

log = logging.getLogger(__name__)

RETRYABLE = ("network", "rate_limited")


class OpenAIChatBackend(ChatBackend):
    """Chat backend talking to ``POST {base_url}/chat/completions``.

    The API key is read from the environment variable ``api_key_env`` at
    construction; a missing key raises ``BackendError("auth")`` before any
    request goes out. Rate-limit and network failures are retried with
    exponential backoff, up to ``max_attempts`` tries per call.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.0,
        request_timeout_seconds: float = 60.0,
        max_concurrent: int = 4,
        max_attempts: int = 3,
        backoff_seconds: float = 1.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
        cache_replies: bool = True,
        _shared: tuple[httpx.Client, threading.BoundedSemaphore] | None = None,
    ) -> None:
        super().__init__(cache_replies=cache_replies)
        if max_concurrent < 1:
            raise ValueError("max_concurrent must be >= 1")
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.temperature = temperature
        self.request_timeout_seconds = request_timeout_seconds
        self.max_concurrent = max_concurrent
        self.max_attempts = max_attempts
        self.backoff_seconds = backoff_seconds
        self._sleep = sleep
        if _shared is None:
            api_key = os.environ.get(api_key_env, "").strip()
            if not api_key:
                raise BackendError("auth", f"environment variable {api_key_env} is not set")
            client = httpx.Client(
                base_url=self.base_url,
                headers={"Authorization": f"Bearer {api_key}"},
                timeout=request_timeout_seconds,
                transport=transport,
            )
            _shared = (client, threading.BoundedSemaphore(max_concurrent))
        self._client, self._gate = _shared

    def spawn(self) -> "OpenAIChatBackend":
        return OpenAIChatBackend(
            self.base_url,
            self.model,
            api_key_env=self.api_key_env,
            temperature=self.temperature,
            request_timeout_seconds=self.request_timeout_seconds,
            max_concurrent=self.max_concurrent,
            max_attempts=self.max_attempts,
            backoff_seconds=self.backoff_seconds,
            sleep=self._sleep,
            cache_replies=self._accountant.cache_replies,
            _shared=(self._client, self._gate),
        )

    def close(self) -> None:
        self._client.close()

    def request_body(self, messages: Sequence[Message]) -> dict:
        return {
            "model": self.model,
            "messages": [m.to_dict() for m in messages],
            "temperature": self.temperature,
        }

    def _post_once(self, body: dict) -> str:
        try:
            with self._gate:
                resp = self._client.post("/chat/completions", json=body)
        except httpx.TimeoutException as exc:
            raise BackendError("network", f"request timed out: {exc}") from exc
        except httpx.TransportError as exc:
            raise BackendError("network", str(exc)) from exc

        status = resp.status_code
        if status in (401, 403):
            raise BackendError("auth", resp.text[:200], status=status)
        if status == 429:
            raise BackendError("rate_limited", resp.text[:200], status=status)
        if status >= 500:
            raise BackendError("network", f"upstream returned {status}", status=status)
        if status >= 400:
            raise BackendError("malformed_upstream", f"upstream rejected request ({status}): {resp.text[:200]}", status=status)
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError("malformed_upstream", "response lacks choices[0].message.content", status=status) from exc
        if not isinstance(content, str):
            raise BackendError("malformed_upstream", "message content is not text", status=status)
        return content

    def _generate(self, messages: Sequence[Message]) -> str:
        body = self.request_body(messages)
        for attempt in range(self.max_attempts):
            try:
                return self._post_once(body)
            except BackendError as err:
                if err.kind not in RETRYABLE or attempt == self.max_attempts - 1:
                    raise
                delay = self.backoff_seconds * 2**attempt
                log.warning("chat call failed (%s), retry %d/%d in %.1fs",
                            err, attempt + 1, self.max_attempts - 1, delay)
                self._sleep(delay)
        raise AssertionError("unreachable")
