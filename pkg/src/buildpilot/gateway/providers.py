"""Live HTTP providers for OpenAI-style and Anthropic-style APIs.

Both providers accept an injectable transport so tests can run without a
network. A transport is ``fn(method, url, headers, payload, timeout) ->
(status_code, parsed_json)`` and raises TransientTransportError for
retry-worthy failures (connection errors, timeouts).
"""

from __future__ import annotations

import json
import logging
import time
from typing import Callable, Protocol, runtime_checkable

from buildpilot.errors import AuthFailure, TransportExhausted
from buildpilot.gateway.types import (
    ChatRequest,
    ChatResponse,
    EmbeddingResult,
    ModelProfile,
    ToolCall,
)

logger = logging.getLogger(__name__)

Transport = Callable[[str, str, dict, dict, float], "tuple[int, dict]"]


class TransientTransportError(Exception):
    """Network-level failure that is worth retrying."""


class ProviderRejected(Exception):
    """Provider answered with a non-retryable error status."""


def requests_transport(method: str, url: str, headers: dict, payload: dict, timeout: float):
    import requests

    try:
        resp = requests.request(method, url, headers=headers, json=payload, timeout=timeout)
    except requests.RequestException as exc:
        raise TransientTransportError(str(exc)) from exc
    try:
        body = resp.json()
    except ValueError:
        body = {"raw": resp.text[:2000]}
    return resp.status_code, body


@runtime_checkable
class Provider(Protocol):
    """What the gateway needs from any completion backend."""

    supports_tool_calls: bool

    def chat(self, request: ChatRequest, profile: ModelProfile) -> ChatResponse:
        ...

    def embed(self, texts: list[str], profile: ModelProfile) -> EmbeddingResult:
        ...


def _check_status(status: int, body: dict) -> None:
    if status in (401, 403):
        raise AuthFailure(f"provider returned {status}: {_err_text(body)}")
    if status == 429 or status >= 500:
        raise TransientTransportError(f"provider returned {status}: {_err_text(body)}")
    if status >= 400:
        raise ProviderRejected(f"provider returned {status}: {_err_text(body)}")


def _err_text(body: dict) -> str:
    err = body.get("error")
    if isinstance(err, dict):
        return str(err.get("message", err))[:500]
    return json.dumps(body)[:500]


def _estimate_tokens_for_texts(texts: list[str]) -> int:
    return sum(len(t.encode("utf-8")) // 4 + 1 for t in texts)


class OpenAICompatProvider:
    """Chat + embeddings against a /v1/chat/completions style API."""

    supports_tool_calls = True

    def __init__(self, base_url: str, api_key: str, transport: Transport = requests_transport,
                 timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.transport = transport
        self.timeout = timeout

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.api_key}", "Content-Type": "application/json"}

    def chat(self, request: ChatRequest, profile: ModelProfile) -> ChatResponse:
        payload: dict = {
            "model": profile.model_id,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        if request.tools:
            payload["tools"] = [
                {
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    },
                }
                for t in request.tools
            ]
        started = time.monotonic()
        status, body = self.transport(
            "POST", f"{self.base_url}/chat/completions", self._headers(), payload, self.timeout
        )
        _check_status(status, body)
        latency_ms = (time.monotonic() - started) * 1000.0
        try:
            message = body["choices"][0]["message"]
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderRejected(f"malformed completion payload: {exc}") from exc
        tool_calls = []
        for raw in message.get("tool_calls") or []:
            fn = raw.get("function", {})
            try:
                args = json.loads(fn.get("arguments") or "{}")
            except ValueError:
                args = {}
            tool_calls.append(ToolCall(name=fn.get("name", ""), arguments=args,
                                       call_id=raw.get("id", "")))
        usage = body.get("usage") or {}
        estimated = "prompt_tokens" not in usage
        input_tokens = usage.get(
            "prompt_tokens", _estimate_tokens_for_texts([m.content for m in request.messages])
        )
        text = message.get("content") or ""
        output_tokens = usage.get("completion_tokens", _estimate_tokens_for_texts([text]))
        return ChatResponse(
            text=text,
            input_tokens=int(input_tokens),
            output_tokens=int(output_tokens),
            latency_ms=latency_ms,
            estimated=estimated,
            tool_calls=tuple(tool_calls),
        )

    def embed(self, texts: list[str], profile: ModelProfile) -> EmbeddingResult:
        payload = {"model": profile.model_id, "input": texts}
        status, body = self.transport(
            "POST", f"{self.base_url}/embeddings", self._headers(), payload, self.timeout
        )
        _check_status(status, body)
        try:
            rows = sorted(body["data"], key=lambda d: d["index"])
            vectors = [row["embedding"] for row in rows]
        except (KeyError, TypeError) as exc:
            raise ProviderRejected(f"malformed embeddings payload: {exc}") from exc
        usage = body.get("usage") or {}
        input_tokens = usage.get("prompt_tokens", _estimate_tokens_for_texts(texts))
        return EmbeddingResult(vectors=vectors, input_tokens=int(input_tokens))


class AnthropicCompatProvider:
    """Chat against a /v1/messages style API. No embeddings endpoint."""

    supports_tool_calls = True

    def __init__(self, base_url: str, api_key: str, transport: Transport = requests_transport,
                 timeout: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.api_key = api_key
        self.transport = transport
        self.timeout = timeout

    def _headers(self) -> dict:
        return {
            "x-api-key": self.api_key,
            "anthropic-version": "2023-06-01",
            "Content-Type": "application/json",
        }

    def chat(self, request: ChatRequest, profile: ModelProfile) -> ChatResponse:
        system_parts = [m.content for m in request.messages if m.role == "system"]
        payload: dict = {
            "model": profile.model_id,
            "max_tokens": request.max_output_tokens,
            "temperature": request.temperature,
            "messages": [
                {"role": m.role, "content": m.content}
                for m in request.messages
                if m.role in ("user", "assistant")
            ],
        }
        if system_parts:
            payload["system"] = "\n\n".join(system_parts)
        if request.tools:
            payload["tools"] = [
                {"name": t.name, "description": t.description, "input_schema": t.parameters}
                for t in request.tools
            ]
        started = time.monotonic()
        status, body = self.transport(
            "POST", f"{self.base_url}/messages", self._headers(), payload, self.timeout
        )
        _check_status(status, body)
        latency_ms = (time.monotonic() - started) * 1000.0
        text_parts: list[str] = []
        tool_calls: list[ToolCall] = []
        for block in body.get("content") or []:
            if block.get("type") == "text":
                text_parts.append(block.get("text", ""))
            elif block.get("type") == "tool_use":
                tool_calls.append(
                    ToolCall(
                        name=block.get("name", ""),
                        arguments=block.get("input") or {},
                        call_id=block.get("id", ""),
                    )
                )
        usage = body.get("usage") or {}
        estimated = "input_tokens" not in usage
        text = "".join(text_parts)
        input_tokens = usage.get(
            "input_tokens", _estimate_tokens_for_texts([m.content for m in request.messages])
        )
        output_tokens = usage.get("output_tokens", _estimate_tokens_for_texts([text]))
        return ChatResponse(
            text=text,
            input_tokens=int(input_tokens),
            output_tokens=int(output_tokens),
            latency_ms=latency_ms,
            estimated=estimated,
            tool_calls=tuple(tool_calls),
        )

    def embed(self, texts: list[str], profile: ModelProfile) -> EmbeddingResult:
        raise ProviderRejected("this provider has no embeddings endpoint")
