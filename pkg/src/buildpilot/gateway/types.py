"""Request/response dataclasses and the model registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal

from buildpilot.errors import UnknownModel

VALID_PROVIDERS = ("openai-compatible", "anthropic-compatible", "replay")
VALID_ROLES = ("system", "user", "assistant", "tool")


@dataclass(frozen=True)
class ModelProfile:
    """Static description of one model: routing, pricing, and limits.

    Prices are USD per million tokens, kept as Decimal end to end so cost
    accounting never goes through binary floats.
    """

    model_id: str
    provider: str
    input_price_usd_per_mtok: Decimal
    output_price_usd_per_mtok: Decimal
    max_context_tokens: int
    base_url: str = ""
    api_key_env: str = ""
    supports_tool_calls: bool = False
    embedding_dim: int = 64

    def __post_init__(self) -> None:
        if not self.model_id:
            raise ValueError("model_id must be non-empty")
        if self.provider not in VALID_PROVIDERS:
            raise ValueError(f"unknown provider kind: {self.provider!r}")
        if self.input_price_usd_per_mtok < 0 or self.output_price_usd_per_mtok < 0:
            raise ValueError("token prices must be >= 0")
        if self.max_context_tokens <= 0:
            raise ValueError("max_context_tokens must be positive")
        if self.embedding_dim <= 0:
            raise ValueError("embedding_dim must be positive")


class ModelRegistry:
    """Mutable mapping of model_id to ModelProfile."""

    def __init__(self, profiles: list[ModelProfile] | None = None):
        self._profiles: dict[str, ModelProfile] = {}
        for profile in profiles or []:
            self.add(profile)

    def add(self, profile: ModelProfile) -> None:
        self._profiles[profile.model_id] = profile

    def get(self, model_id: str) -> ModelProfile:
        try:
            return self._profiles[model_id]
        except KeyError:
            raise UnknownModel(f"model {model_id!r} is not registered") from None

    def __contains__(self, model_id: str) -> bool:
        return model_id in self._profiles

    def ids(self) -> list[str]:
        return sorted(self._profiles)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in VALID_ROLES:
            raise ValueError(f"unknown message role: {self.role!r}")


@dataclass(frozen=True)
class ToolSpec:
    """JSON-schema description of one callable tool, for tool-call models."""

    name: str
    description: str
    parameters: dict


@dataclass(frozen=True)
class ToolCall:
    name: str
    arguments: dict
    call_id: str = ""


@dataclass
class ChatRequest:
    """One completion request.

    tag names the agent role issuing the call ("MasterAgent", "Solver-1", ...);
    it keys both ledger attribution and replay fixtures.
    """

    model_id: str
    messages: list[ChatMessage]
    tag: str
    temperature: float = 0.2
    max_output_tokens: int = 2048
    tools: tuple[ToolSpec, ...] = ()

    def validate(self) -> None:
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message must be system or user")
        if not self.tag:
            raise ValueError("tag must be non-empty")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ChatResponse:
    """Completion result plus the token counts used for cost accounting.

    estimated is True when the provider did not report usage and the counts
    are byte-length estimates.
    """

    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: float = 0.0
    estimated: bool = False
    tool_calls: tuple[ToolCall, ...] = ()


@dataclass(frozen=True)
class EmbeddingResult:
    vectors: list
    input_tokens: int
