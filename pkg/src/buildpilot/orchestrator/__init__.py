"""Compilation run orchestration: phases, budgets, tools, and strategies."""

from buildpilot.orchestrator.acquire import AcquisitionError, acquire_repo
from buildpilot.orchestrator.budget import BudgetExceeded, BudgetTracker
from buildpilot.orchestrator.dispatch import ToolDispatcher, command_is_dangerous
from buildpilot.orchestrator.flow import (
    StrategyContext,
    classify_shell_result,
    flow_strategy,
    run_project,
    self_fix,
)
from buildpilot.orchestrator.session import (
    FAILURE_REASONS,
    PHASES,
    TERMINAL_PHASES,
    TRANSITIONS,
    CompilationSession,
    PhaseTransition,
    SessionOutcome,
    ToolInvocation,
)
from buildpilot.orchestrator.strategies import STRATEGIES, resolve_strategy

__all__ = [
    "AcquisitionError",
    "acquire_repo",
    "BudgetExceeded",
    "BudgetTracker",
    "classify_shell_result",
    "command_is_dangerous",
    "CompilationSession",
    "FAILURE_REASONS",
    "PHASES",
    "PhaseTransition",
    "resolve_strategy",
    "run_project",
    "self_fix",
    "SessionOutcome",
    "STRATEGIES",
    "StrategyContext",
    "TERMINAL_PHASES",
    "ToolDispatcher",
    "ToolInvocation",
    "TRANSITIONS",
    "flow_strategy",
]
