"""Append-only usage ledger with exact Decimal cost arithmetic."""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field
from decimal import Decimal

from buildpilot.gateway.types import ModelProfile

_MTOK = Decimal(1_000_000)


def call_cost(profile: ModelProfile, input_tokens: int, output_tokens: int) -> Decimal:
    """Exact USD cost of one call at the profile's per-Mtok prices."""
    if input_tokens < 0 or output_tokens < 0:
        raise ValueError("token counts must be >= 0")
    return (
        Decimal(input_tokens) * profile.input_price_usd_per_mtok
        + Decimal(output_tokens) * profile.output_price_usd_per_mtok
    ) / _MTOK


@dataclass(frozen=True)
class LedgerEntry:
    tag: str
    model_id: str
    input_tokens: int
    output_tokens: int
    cost_usd: Decimal
    kind: str = "chat"
    timestamp: float = field(default_factory=time.time)


class UsageLedger:
    """Thread-safe, append-only record of every model call in a run."""

    def __init__(self) -> None:
        self._entries: list[LedgerEntry] = []
        self._lock = threading.Lock()

    def append(self, entry: LedgerEntry) -> None:
        with self._lock:
            self._entries.append(entry)

    def record(
        self,
        tag: str,
        profile: ModelProfile,
        input_tokens: int,
        output_tokens: int,
        kind: str = "chat",
    ) -> LedgerEntry:
        entry = LedgerEntry(
            tag=tag,
            model_id=profile.model_id,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            cost_usd=call_cost(profile, input_tokens, output_tokens),
            kind=kind,
        )
        self.append(entry)
        return entry

    @property
    def entries(self) -> tuple[LedgerEntry, ...]:
        with self._lock:
            return tuple(self._entries)

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def total_cost_usd(self) -> Decimal:
        return sum((e.cost_usd for e in self.entries), Decimal(0))

    def total_tokens(self) -> int:
        return sum(e.input_tokens + e.output_tokens for e in self.entries)

    def count(self, tag_prefix: str = "") -> int:
        return sum(1 for e in self.entries if e.tag.startswith(tag_prefix))
