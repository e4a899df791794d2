"""Per-run session record: phase machine, tool invocations, transcript.

The transcript digest covers only stable fields (phase transitions and tool
invocations by content digest), so a replayed run and the recording that
produced it hash identically even though wall-clock timing differs.
"""

from __future__ import annotations

import io
import json
import logging
import re
import time
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

from buildpilot.digests import canonical_json, sha256_hex

logger = logging.getLogger(__name__)

TRANSCRIPT_VERSION = 1

PHASES = (
    "Init",
    "RepoAcquired",
    "StructureMapped",
    "CandidatesFound",
    "InstructionsExtracted",
    "Compiling",
    "SelfFixing",
    "ErrorSolving",
    "Succeeded",
    "Failed",
)

TERMINAL_PHASES = frozenset({"Succeeded", "Failed"})

# Legal moves; Failed is reachable from every non-terminal phase.
TRANSITIONS: dict[str, frozenset] = {
    "Init": frozenset({"RepoAcquired", "Failed"}),
    "RepoAcquired": frozenset({"StructureMapped", "Compiling", "Failed"}),
    "StructureMapped": frozenset({"CandidatesFound", "Failed"}),
    "CandidatesFound": frozenset({"InstructionsExtracted", "Failed"}),
    "InstructionsExtracted": frozenset({"Compiling", "Failed"}),
    "Compiling": frozenset({"SelfFixing", "ErrorSolving", "Succeeded", "Failed"}),
    "SelfFixing": frozenset({"Compiling", "ErrorSolving", "Failed"}),
    "ErrorSolving": frozenset({"Compiling", "Failed"}),
    "Succeeded": frozenset(),
    "Failed": frozenset(),
}

FAILURE_REASONS = (
    "BudgetExhausted",
    "NavigationFailed",
    "CompileFailed",
    "SandboxError",
    "ExtractionFailed",
)


class IllegalTransition(Exception):
    pass


@dataclass(frozen=True)
class PhaseTransition:
    from_phase: str
    to_phase: str
    timestamp: float
    note: str = ""


@dataclass(frozen=True)
class ToolInvocation:
    seq: int
    tool_id: str
    input_digest: str
    output_digest: str
    duration_ms: int
    input_tokens: int = 0
    output_tokens: int = 0
    cost_usd: Decimal = Decimal(0)


@dataclass(frozen=True)
class SessionOutcome:
    """Terminal summary of one run, the unit the benchmark aggregates."""

    status: str  # success | failure
    failure_reason: str  # one of FAILURE_REASONS, or "" on success
    elapsed_seconds: float
    cost_usd: Decimal
    commands_run: int
    error_solver_rounds_used: int

    def __post_init__(self) -> None:
        if self.status not in ("success", "failure"):
            raise ValueError(f"unknown status {self.status!r}")
        if self.status == "success" and self.failure_reason:
            raise ValueError("a successful outcome carries no failure reason")
        if self.status == "failure" and self.failure_reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {self.failure_reason!r}")
        if self.elapsed_seconds < 0:
            raise ValueError("elapsed must be >= 0")

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "failure_reason": self.failure_reason,
            "elapsed_seconds": round(self.elapsed_seconds, 3),
            "cost_usd": str(self.cost_usd),
            "commands_run": self.commands_run,
            "error_solver_rounds_used": self.error_solver_rounds_used,
        }

    @classmethod
    def from_json(cls, data: dict) -> "SessionOutcome":
        return cls(
            status=data["status"],
            failure_reason=data.get("failure_reason", ""),
            elapsed_seconds=float(data["elapsed_seconds"]),
            cost_usd=Decimal(data["cost_usd"]),
            commands_run=int(data["commands_run"]),
            error_solver_rounds_used=int(data["error_solver_rounds_used"]),
        )


class TranscriptCanonicalizer:
    """Rewrites run-specific paths so transcripts digest stably across hosts."""

    def __init__(self, workdir: str | Path = "", scratch: str | Path = ""):
        self._subs: list[tuple[str, str]] = []
        if workdir:
            self._subs.append((str(workdir), "<WORKDIR>"))
        if scratch:
            self._subs.append((str(scratch), "<SCRATCH>"))
        # Longest first so nested paths collapse before their parents.
        self._subs.sort(key=lambda pair: len(pair[0]), reverse=True)

    def apply(self, text: str) -> str:
        for needle, token in self._subs:
            if needle:
                text = text.replace(needle, token)
        return text


_WS = re.compile(r"\s+")


def content_digest(payload, canon: TranscriptCanonicalizer | None = None) -> str:
    """Digest of arbitrary tool input/output after path canonicalization."""
    text = payload if isinstance(payload, str) else canonical_json(payload)
    if canon is not None:
        text = canon.apply(text)
    return sha256_hex(_WS.sub(" ", text).strip())[:16]


class CompilationSession:
    """Accumulates one run's phase history and tool invocations."""

    def __init__(self, project_name: str, strategy: str, model_id: str,
                 clock=time.monotonic,
                 canonicalizer: TranscriptCanonicalizer | None = None):
        self.project_name = project_name
        self.strategy = strategy
        self.model_id = model_id
        self.phase = "Init"
        self.failure_reason = ""
        self.transitions: list[PhaseTransition] = []
        self.invocations: list[ToolInvocation] = []
        self.outcome: SessionOutcome | None = None
        self.canonicalizer = canonicalizer or TranscriptCanonicalizer()
        self._clock = clock
        self._started = clock()
        self._seq = 0

    @property
    def terminal(self) -> bool:
        return self.phase in TERMINAL_PHASES

    @property
    def succeeded(self) -> bool:
        return self.phase == "Succeeded"

    def elapsed_seconds(self) -> float:
        return self._clock() - self._started

    def advance(self, to_phase: str, note: str = "") -> None:
        if to_phase not in PHASES:
            raise IllegalTransition(f"unknown phase {to_phase!r}")
        if to_phase not in TRANSITIONS[self.phase]:
            raise IllegalTransition(f"{self.phase} -> {to_phase} is not a legal move")
        self.transitions.append(
            PhaseTransition(self.phase, to_phase, self._clock(), note))
        logger.debug("%s: %s -> %s %s", self.project_name, self.phase, to_phase,
                     note or "")
        self.phase = to_phase

    def fail(self, reason: str, note: str = "") -> None:
        if reason not in FAILURE_REASONS:
            raise ValueError(f"unknown failure reason {reason!r}")
        self.failure_reason = reason
        self.advance("Failed", note or reason)

    def record_tool(self, tool_id: str, input_payload, output_payload,
                    duration_ms: int = 0, input_tokens: int = 0,
                    output_tokens: int = 0,
                    cost_usd: Decimal = Decimal(0)) -> ToolInvocation:
        self._seq += 1
        invocation = ToolInvocation(
            seq=self._seq,
            tool_id=tool_id,
            input_digest=content_digest(input_payload, self.canonicalizer),
            output_digest=content_digest(output_payload, self.canonicalizer),
            duration_ms=duration_ms,
            input_tokens=input_tokens,
            output_tokens=output_tokens,
            cost_usd=cost_usd,
        )
        self.invocations.append(invocation)
        return invocation

    def tool_count(self, tool_id: str) -> int:
        return sum(1 for inv in self.invocations if inv.tool_id == tool_id)

    def transcript_digest(self) -> str:
        """Stable digest: ordered transitions then invocations, no timing."""
        buf = io.StringIO()
        for tr in self.transitions:
            buf.write(canonical_json(["phase", tr.from_phase, tr.to_phase]))
            buf.write("\n")
        for inv in self.invocations:
            buf.write(canonical_json(
                ["tool", inv.tool_id, inv.input_digest, inv.output_digest]))
            buf.write("\n")
        return sha256_hex(buf.getvalue())

    def to_record(self) -> dict:
        record = {
            "project": self.project_name,
            "strategy": self.strategy,
            "model_id": self.model_id,
            "phase": self.phase,
            "failure_reason": self.failure_reason,
            "elapsed_seconds": round(self.elapsed_seconds(), 3),
            "transitions": [
                {"from": tr.from_phase, "to": tr.to_phase, "note": tr.note}
                for tr in self.transitions
            ],
            "invocations": [
                {"seq": inv.seq, "tool_id": inv.tool_id,
                 "input_digest": inv.input_digest,
                 "output_digest": inv.output_digest,
                 "duration_ms": inv.duration_ms,
                 "input_tokens": inv.input_tokens,
                 "output_tokens": inv.output_tokens,
                 "cost_usd": str(inv.cost_usd)}
                for inv in self.invocations
            ],
            "transcript_digest": self.transcript_digest(),
        }
        if self.outcome is not None:
            record["outcome"] = self.outcome.to_json()
        return record

    def write_transcript(self, path: Path) -> Path:
        """One JSON object per line: header, transitions, invocations, footer."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            header = {"kind": "run", "format_version": TRANSCRIPT_VERSION,
                      "project": self.project_name,
                      "strategy": self.strategy, "model_id": self.model_id}
            handle.write(json.dumps(header, sort_keys=True) + "\n")
            for tr in self.transitions:
                handle.write(json.dumps(
                    {"kind": "phase", "from": tr.from_phase, "to": tr.to_phase,
                     "note": self.canonicalizer.apply(tr.note)},
                    sort_keys=True) + "\n")
            for inv in self.invocations:
                handle.write(json.dumps(
                    {"kind": "tool", "seq": inv.seq, "tool_id": inv.tool_id,
                     "input_digest": inv.input_digest,
                     "output_digest": inv.output_digest,
                     "duration_ms": inv.duration_ms,
                     "input_tokens": inv.input_tokens,
                     "output_tokens": inv.output_tokens,
                     "cost_usd": str(inv.cost_usd)}, sort_keys=True) + "\n")
            footer = {"kind": "end", "phase": self.phase,
                      "failure_reason": self.failure_reason,
                      "transcript_digest": self.transcript_digest()}
            if self.outcome is not None:
                footer["outcome"] = self.outcome.to_json()
            handle.write(json.dumps(footer, sort_keys=True) + "\n")
        return path
