"""Single funnel for tool execution: ablation, budgets, invocation records.

Every strategy runs tools through the dispatcher so ablation semantics stay
uniform: a disabled file_navigator, website_search, or multi_agent_discussion
produces zero recorded invocations (the dispatcher substitutes or refuses),
while a disabled instruction_extractor still runs and records in degraded
mode with URL following off.
"""

from __future__ import annotations

import logging
import re
import time
from decimal import Decimal

from buildpilot.config import TOOL_IDS, normalize_tool_id
from buildpilot.errors import NoCandidate, SearchUnavailable
from buildpilot.navigator.extract import InstructionPlan, extract_instructions
from buildpilot.navigator.locate import (
    CandidateFile,
    heuristic_candidates,
    locate_guide_files,
)
from buildpilot.orchestrator.budget import BudgetTracker
from buildpilot.orchestrator.session import CompilationSession
from buildpilot.sandbox.listing import parse_tree_paths
from buildpilot.sandbox.types import ExecResult
from buildpilot.solver.classify import ErrorContext, error_report
from buildpilot.solver.discussion import ConsensusResult, DiscussionConfig, discuss
from buildpilot.solver.search import search_web

logger = logging.getLogger(__name__)

# Commands the sandbox refuses outright. Agents see a synthetic failure
# observation instead of the command running; the invocation still counts
# against the shell budget and lands in the transcript.
_DANGEROUS_PATTERNS = (
    re.compile(r"\brm\s+(-[a-zA-Z]*r[a-zA-Z]*f|-[a-zA-Z]*f[a-zA-Z]*r)\s+/(\s|$)"),
    re.compile(r"\brm\s+-[rRf]+\s+/\*"),
    re.compile(r"\bdd\b.*\bof=/dev/(sd|hd|nvme|vd|xvd)"),
    re.compile(r"\bmkfs(\.[a-z0-9]+)?\b"),
    re.compile(r":\(\)\s*\{\s*:\|:\s*&\s*\}\s*;"),
    re.compile(r"\b(shutdown|reboot|halt|poweroff)\b"),
    re.compile(r">\s*/dev/(sd|hd|nvme|vd|xvd)"),
)

_REFUSAL = "command refused: it matches the destructive-command denylist"


def command_is_dangerous(command: str) -> bool:
    return any(p.search(command) for p in _DANGEROUS_PATTERNS)


class ToolDispatcher:
    def __init__(
        self,
        sandbox_session,
        gateway,
        model_id: str,
        run: CompilationSession,
        budget: BudgetTracker,
        disabled_tools: frozenset = frozenset(),
        search_backend=None,
        discussion: DiscussionConfig | None = None,
        fetcher=None,
        follow_urls: bool = True,
        clock=time.monotonic,
    ):
        self.session = sandbox_session
        self.gateway = gateway
        self.model_id = model_id
        self.run = run
        self.budget = budget
        self.disabled_tools = frozenset(normalize_tool_id(t) for t in disabled_tools)
        self.search_backend = search_backend
        self.discussion = discussion or DiscussionConfig()
        self.fetcher = fetcher
        self.follow_urls = follow_urls
        self._clock = clock

    def enabled(self, tool_id: str) -> bool:
        return normalize_tool_id(tool_id) not in self.disabled_tools

    def _timed(self, started: float) -> int:
        return int((self._clock() - started) * 1000)

    def _ledger_mark(self) -> tuple[int, int, Decimal]:
        ledger = getattr(self.gateway, "ledger", None)
        if ledger is None:
            return (0, 0, Decimal(0))
        ins = sum(e.input_tokens for e in ledger.entries)
        outs = sum(e.output_tokens for e in ledger.entries)
        return (ins, outs, ledger.total_cost_usd())

    def _record(self, tool_id: str, input_payload, output_payload,
                started: float, mark: tuple[int, int, Decimal]) -> None:
        ins, outs, cost = self._ledger_mark()
        self.run.record_tool(
            tool_id, input_payload, output_payload, self._timed(started),
            input_tokens=ins - mark[0], output_tokens=outs - mark[1],
            cost_usd=cost - mark[2])

    def run_shell(self, command: str, timeout: float | None = None) -> ExecResult:
        """Charged against the shell budget before the command runs."""
        self.budget.charge_shell_command()
        started = self._clock()
        mark = self._ledger_mark()
        if command_is_dangerous(command):
            logger.warning("refused dangerous command: %s", command)
            result = ExecResult(command=command, exit_code=126,
                                stdout_excerpt="", stderr_excerpt=_REFUSAL,
                                truncated=False, duration_ms=0, timed_out=False)
        else:
            result = self.session.exec(command, timeout=timeout)
        self._record(
            "shell", command,
            {"exit": result.exit_code, "stdout": result.stdout_excerpt,
             "stderr": result.stderr_excerpt},
            started, mark)
        self.budget.checkpoint()
        return result

    def fetch_structure(self) -> str:
        """Directory listing is groundwork, not a charged tool."""
        return self.session.fetch_structure()

    def locate_candidates(self, structure: str) -> list[CandidateFile]:
        """Ranked build-guide candidates; heuristic-only when ablated."""
        if not self.enabled("file_navigator"):
            paths = parse_tree_paths(structure)
            hits = heuristic_candidates(paths)
            if not hits:
                raise NoCandidate("no build guide candidates in listing")
            return [CandidateFile(path=p, rank=i + 1, source="heuristic")
                    for i, p in enumerate(hits[:5])]
        started = self._clock()
        mark = self._ledger_mark()
        candidates = locate_guide_files(structure, self.gateway, self.model_id)
        self._record("file_navigator", structure,
                     [c.path for c in candidates], started, mark)
        return candidates

    def extract_plan(self, candidate: CandidateFile) -> InstructionPlan:
        """Always recorded; ablation only turns off URL following."""
        follow = self.follow_urls and self.enabled("instruction_extractor")
        started = self._clock()
        mark = self._ledger_mark()
        plan = extract_instructions(
            candidate, self.session, self.gateway, self.model_id,
            follow_urls=follow, fetcher=self.fetcher)
        self._record("instruction_extractor", candidate.path,
                     list(plan.steps), started, mark)
        return plan

    def web_search(self, query: str) -> str:
        if not self.enabled("website_search"):
            raise SearchUnavailable("website_search tool is disabled")
        started = self._clock()
        mark = self._ledger_mark()
        evidence = search_web(query, self.search_backend, self.gateway,
                              self.model_id, fetcher=self.fetcher)
        self._record("website_search", query, evidence, started, mark)
        return evidence

    def discuss_error(self, ctx: ErrorContext) -> ConsensusResult | None:
        """None when the discussion tool is ablated."""
        if not self.enabled("multi_agent_discussion"):
            return None
        started = self._clock()
        mark = self._ledger_mark()
        result = discuss(ctx, self.gateway, self.model_id, self.discussion)
        self._record("multi_agent_discussion", error_report(ctx),
                     list(result.final_commands), started, mark)
        return result

    def usage_by_tool(self) -> dict[str, int]:
        return {tool: self.run.tool_count(tool) for tool in TOOL_IDS}
