"""The Gateway: single front door for completions and embeddings.

Owns the model registry, the usage ledger, transient-failure retries, and a
context-size pre-check. One logical complete() call produces exactly one
ledger entry no matter how many internal retries happened.
"""

from __future__ import annotations

import logging
import time
from typing import Callable

import numpy as np

from buildpilot.errors import ContextOverflow, TransportExhausted, UnknownModel
from buildpilot.gateway.ledger import UsageLedger
from buildpilot.gateway.providers import (
    Provider,
    ProviderRejected,
    TransientTransportError,
)
from buildpilot.gateway.types import ChatRequest, ChatResponse, ModelProfile, ModelRegistry

logger = logging.getLogger(__name__)

MAX_RETRIES = 3


def estimate_tokens(text: str) -> int:
    """Cheap byte-length token estimate used for context checks and fallbacks."""
    return len(text.encode("utf-8")) // 4 + 1


def _estimate_prompt_tokens(request: ChatRequest) -> int:
    return sum(estimate_tokens(m.content) for m in request.messages)


class Gateway:
    """Routes requests to a provider and accounts for every call."""

    def __init__(
        self,
        registry: ModelRegistry,
        ledger: UsageLedger,
        provider_resolver: Callable[[ModelProfile], Provider],
        sleep: Callable[[float], None] = time.sleep,
        base_delay: float = 0.5,
    ):
        self.registry = registry
        self.ledger = ledger
        self.provider_resolver = provider_resolver
        self.sleep = sleep
        self.base_delay = base_delay

    def complete(self, request: ChatRequest) -> ChatResponse:
        request.validate()
        profile = self.registry.get(request.model_id)
        estimated_prompt = _estimate_prompt_tokens(request)
        if estimated_prompt > profile.max_context_tokens:
            raise ContextOverflow(
                f"prompt estimates to {estimated_prompt} tokens, "
                f"over {profile.model_id}'s window of {profile.max_context_tokens}"
            )
        provider = self.provider_resolver(profile)
        response = self._with_retries(lambda: provider.chat(request, profile))
        self.ledger.record(
            tag=request.tag,
            profile=profile,
            input_tokens=response.input_tokens,
            output_tokens=response.output_tokens,
        )
        return response

    def embed(self, texts: list[str], model_id: str) -> list[np.ndarray]:
        if not texts:
            raise ValueError("texts must be non-empty")
        profile = self.registry.get(model_id)
        provider = self.provider_resolver(profile)
        try:
            result = self._with_retries(lambda: provider.embed(texts, profile))
        except ProviderRejected as exc:
            raise UnknownModel(f"{model_id!r} cannot embed: {exc}") from exc
        vectors = []
        for raw in result.vectors:
            vec = np.asarray(raw, dtype=np.float32)
            norm = float(np.linalg.norm(vec))
            if norm == 0.0:
                vec = np.ones_like(vec)
                norm = float(np.linalg.norm(vec))
            vectors.append(vec / norm)
        self.ledger.record(
            tag="embed",
            profile=profile,
            input_tokens=result.input_tokens,
            output_tokens=0,
            kind="embed",
        )
        return vectors

    def supports_tool_calls(self, model_id: str) -> bool:
        profile = self.registry.get(model_id)
        provider = self.provider_resolver(profile)
        return bool(getattr(provider, "supports_tool_calls", False))

    def _with_retries(self, call):
        attempts = 1 + MAX_RETRIES
        last_exc: Exception | None = None
        for attempt in range(attempts):
            try:
                return call()
            except TransientTransportError as exc:
                last_exc = exc
                if attempt < attempts - 1:
                    delay = self.base_delay * (2**attempt)
                    logger.warning("transient provider failure (%s); retry in %.1fs", exc, delay)
                    self.sleep(delay)
        raise TransportExhausted(
            f"gave up after {attempts} attempts: {last_exc}"
        ) from last_exc
