"""Model gateway: one front door for every LLM completion and embedding.

All agent code talks to a Gateway instance; the gateway owns the model
registry, the usage ledger, retries, and the live/replay provider switch.
"""

from buildpilot.gateway.ledger import LedgerEntry, UsageLedger
from buildpilot.gateway.replay import (
    ArchiveWriter,
    RecordingProvider,
    ReplayArchive,
    ReplayProvider,
)
from buildpilot.gateway.service import Gateway, estimate_tokens
from buildpilot.gateway.types import (
    ChatMessage,
    ChatRequest,
    ChatResponse,
    ModelProfile,
    ModelRegistry,
    ToolCall,
    ToolSpec,
)

__all__ = [
    "ArchiveWriter",
    "ChatMessage",
    "ChatRequest",
    "ChatResponse",
    "Gateway",
    "LedgerEntry",
    "ModelProfile",
    "ModelRegistry",
    "RecordingProvider",
    "ReplayArchive",
    "ReplayProvider",
    "ToolCall",
    "ToolSpec",
    "UsageLedger",
    "estimate_tokens",
]
