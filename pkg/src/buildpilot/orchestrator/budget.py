"""Hard run budgets: shell commands, fix attempts, wall clock, tokens."""

from __future__ import annotations

import logging
import time

from buildpilot.config import BudgetLimits
from buildpilot.gateway.ledger import UsageLedger

logger = logging.getLogger(__name__)


class BudgetExceeded(Exception):
    def __init__(self, resource: str, used, limit):
        super().__init__(f"{resource} budget exhausted ({used} of {limit})")
        self.resource = resource
        self.used = used
        self.limit = limit


class BudgetTracker:
    """Counts consumption against BudgetLimits and raises on overrun.

    Shell commands are charged before execution so a run can never issue
    command N+1; tokens are read from the shared ledger after the fact since
    usage is only known once the provider answers.
    """

    def __init__(self, limits: BudgetLimits, ledger: UsageLedger | None = None,
                 clock=time.monotonic):
        self.limits = limits
        self._ledger = ledger
        self._clock = clock
        self._started = clock()
        self.shell_commands = 0
        self.error_solver_activations = 0

    def elapsed_seconds(self) -> float:
        return self._clock() - self._started

    def charge_shell_command(self) -> None:
        if self.shell_commands >= self.limits.max_shell_commands:
            raise BudgetExceeded("shell_commands", self.shell_commands,
                                 self.limits.max_shell_commands)
        self.shell_commands += 1

    def charge_error_solver(self) -> None:
        if self.error_solver_activations >= self.limits.max_error_solver_activations:
            raise BudgetExceeded("error_solver_activations",
                                 self.error_solver_activations,
                                 self.limits.max_error_solver_activations)
        self.error_solver_activations += 1

    @property
    def solver_available(self) -> bool:
        return self.error_solver_activations < self.limits.max_error_solver_activations

    def check_wall_clock(self) -> None:
        elapsed = self.elapsed_seconds()
        if elapsed > self.limits.wall_clock_seconds:
            raise BudgetExceeded("wall_clock_seconds", round(elapsed, 1),
                                 self.limits.wall_clock_seconds)

    def check_tokens(self) -> None:
        if self._ledger is None:
            return
        used = self._ledger.total_tokens()
        if used > self.limits.token_budget:
            raise BudgetExceeded("tokens", used, self.limits.token_budget)

    def checkpoint(self) -> None:
        """Cheap combined check, called between orchestration steps."""
        self.check_wall_clock()
        self.check_tokens()

    def remaining_shell_commands(self) -> int:
        return max(0, self.limits.max_shell_commands - self.shell_commands)
