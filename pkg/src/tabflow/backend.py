"""Model backends: the chat-completion wire protocol and a scripted mock.

Any object with ``complete(messages, temperature=..., max_tokens=...) -> str``
works as a backend; HttpBackend speaks the JSON chat contract with retries,
ScriptedBackend replays an ordered response list for offline tests.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Protocol, runtime_checkable

import httpx


class BackendError(RuntimeError):
    """Transport failure, exhausted script, or malformed backend response."""


@runtime_checkable
class ModelBackend(Protocol):
    def complete(
        self,
        messages: list[dict[str, str]],
        temperature: float = 0.0,
        max_tokens: int = 2048,
    ) -> str: ...


@dataclass
class HttpBackend:
    """Chat-completion HTTP client.

    Request: {model, messages, temperature, max_tokens}; response: {content}
    (an OpenAI-style choices payload is tolerated). Retries 3 times with
    exponential backoff.
    """

    url: str
    model: str = "default"
    token_env: str = "ENGINE_BACKEND_TOKEN"
    timeout: float = 120.0
    attempts: int = 3
    backoff: float = 0.5
    context_budget: Optional[int] = None

    def complete(
        self,
        messages: list[dict[str, str]],
        temperature: float = 0.0,
        max_tokens: int = 2048,
    ) -> str:
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
        last_error: Exception | None = None
        for attempt in range(self.attempts):
            try:
                response = httpx.post(
                    self.url, json=payload, headers=headers, timeout=self.timeout
                )
                response.raise_for_status()
                return self._extract(response.json())
            except (httpx.HTTPError, json.JSONDecodeError, KeyError, TypeError) as exc:
                last_error = exc
                if attempt + 1 < self.attempts:
                    time.sleep(self.backoff * (2 ** attempt))
        raise BackendError(f"backend call failed after {self.attempts} attempts: {last_error}")

    @staticmethod
    def _extract(data: dict) -> str:
        if "content" in data:
            return str(data["content"])
        choices = data.get("choices")
        if choices:
            return str(choices[0]["message"]["content"])
        raise BackendError(f"no content field in backend response: {list(data)}")


@dataclass
class ScriptedBackend:
    """Replays an ordered response list; records every request for assertions."""

    responses: list[str]
    calls: list[list[dict[str, str]]] = field(default_factory=list)
    context_budget: Optional[int] = None

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        if isinstance(raw, list):
            responses = raw
        else:
            responses = raw["responses"]
        return cls(responses=[str(r) for r in responses])

    def complete(
        self,
        messages: list[dict[str, str]],
        temperature: float = 0.0,
        max_tokens: int = 2048,
    ) -> str:
        self.calls.append([dict(m) for m in messages])
        if len(self.calls) > len(self.responses):
            raise BackendError(
                f"scripted backend exhausted after {len(self.responses)} responses"
            )
        return self.responses[len(self.calls) - 1]

    def script_dict(self) -> dict:
        return {"responses": list(self.responses)}


def backend_from_script_dict(raw: dict) -> ScriptedBackend:
    return ScriptedBackend(responses=[str(r) for r in raw["responses"]])
