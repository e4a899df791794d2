"""Shared test helpers: scripted providers, registries, tiny repos."""

from __future__ import annotations

from decimal import Decimal
from pathlib import Path

import pytest

from buildpilot.gateway.types import (
    ChatMessage,
    ChatRequest,
    ChatResponse,
    EmbeddingResult,
    ModelProfile,
    ModelRegistry,
)

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def make_profile(model_id: str = "test-model", **overrides) -> ModelProfile:
    kwargs = dict(
        model_id=model_id,
        provider="openai-compatible",
        input_price_usd_per_mtok=Decimal("2.50"),
        output_price_usd_per_mtok=Decimal("10.00"),
        max_context_tokens=128_000,
    )
    kwargs.update(overrides)
    return ModelProfile(**kwargs)


def make_registry(*profiles: ModelProfile) -> ModelRegistry:
    return ModelRegistry(list(profiles) or [make_profile()])


def make_request(text: str = "hello", tag: str = "TestAgent",
                 model_id: str = "test-model", **overrides) -> ChatRequest:
    kwargs = dict(
        model_id=model_id,
        messages=[ChatMessage(role="user", content=text)],
        tag=tag,
    )
    kwargs.update(overrides)
    return ChatRequest(**kwargs)


class ScriptedProvider:
    """Provider whose chat() pops canned responses (or raises canned errors)."""

    def __init__(self, script=None, supports_tool_calls: bool = False):
        self.script = list(script or [])
        self.supports_tool_calls = supports_tool_calls
        self.calls: list[ChatRequest] = []

    def push(self, item) -> "ScriptedProvider":
        self.script.append(item)
        return self

    def chat(self, request, profile):
        self.calls.append(request)
        if not self.script:
            return ChatResponse(text="ok", input_tokens=10, output_tokens=5)
        item = self.script.pop(0)
        if isinstance(item, Exception):
            raise item
        if isinstance(item, str):
            return ChatResponse(text=item, input_tokens=10, output_tokens=5)
        return item

    def embed(self, texts, profile):
        from buildpilot.gateway.replay import deterministic_embedding

        vectors = [deterministic_embedding(t, profile.embedding_dim) for t in texts]
        return EmbeddingResult(vectors=vectors, input_tokens=len(texts))


@pytest.fixture
def no_sleep():
    return lambda _seconds: None
