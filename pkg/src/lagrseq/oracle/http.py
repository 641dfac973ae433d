"""Live chat-completion backend (opt-in; needs an endpoint and an API key)."""

from __future__ import annotations

import logging
import os
import time
from dataclasses import dataclass

import httpx

from .base import EmptyCompletionError, OracleQuery, OracleStatusError, OracleTransportError

log = logging.getLogger(__name__)

API_KEY_ENV = "LAGRSEQ_API_KEY"
RETRY_STATUSES = frozenset({408, 409, 429, 500, 502, 503, 504})


@dataclass(frozen=True)
class EndpointConfig:
    url: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4"
    api_key_env: str = API_KEY_ENV
    timeout: float = 60.0
    max_retries: int = 4
    backoff: float = 1.0  # seconds before the first retry; doubles each time


class MissingCredentialError(RuntimeError):
    pass


class HttpOracle:
    def __init__(self, config: EndpointConfig | None = None, client: httpx.Client | None = None, sleep=time.sleep):
        self.config = config or EndpointConfig()
        self.api_key = os.environ.get(self.config.api_key_env, "")
        if not self.api_key:
            raise MissingCredentialError(
                f"live oracle needs an API key in the {self.config.api_key_env} environment variable"
            )
        self.client = client or httpx.Client(timeout=self.config.timeout)
        self.sleep = sleep
        self.backend_id = f"http:{self.config.model}"
        self.attempts = 0

    def _post(self, payload):
        headers = {"Authorization": f"Bearer {self.api_key}"}
        return self.client.post(self.config.url, json=payload, headers=headers, timeout=self.config.timeout)

    def complete(self, query: OracleQuery) -> str:
        payload = {
            "model": self.config.model,
            "temperature": query.temperature,
            "messages": [{"role": "user", "content": query.prompt}],
        }
        delay = self.config.backoff
        for attempt in range(self.config.max_retries + 1):
            self.attempts += 1
            last = attempt == self.config.max_retries
            try:
                resp = self._post(payload)
            except httpx.TransportError as exc:
                if last:
                    raise OracleTransportError(
                        f"{self.config.url} unreachable after {attempt + 1} attempts: {exc}"
                    ) from exc
                log.warning("oracle transport error (%s); retrying in %.1fs", exc, delay)
            else:
                if resp.status_code == 200:
                    return _completion_text(resp)
                if resp.status_code not in RETRY_STATUSES or last:
                    raise OracleStatusError(resp.status_code, resp.text[:200])
                log.warning("oracle returned %d; retrying in %.1fs", resp.status_code, delay)
            self.sleep(delay)
            delay *= 2
        raise AssertionError("unreachable")


def _completion_text(resp: httpx.Response) -> str:
    try:
        text = resp.json()["choices"][0]["message"]["content"]
    except (ValueError, KeyError, IndexError, TypeError) as exc:
        raise EmptyCompletionError(f"response has no completion text: {resp.text[:200]}") from exc
    if not text or not text.strip():
        raise EmptyCompletionError("completion text is empty")
    return text


def http_query(config: EndpointConfig, query: OracleQuery, env, client=None, sleep=time.sleep):
    from .base import interpret

    oracle = HttpOracle(config, client=client, sleep=sleep)
    return interpret(oracle.complete(query), env, oracle.backend_id)
