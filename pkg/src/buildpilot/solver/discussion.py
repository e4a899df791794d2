"""Multi-agent discussion: independent proposals, revision rounds, consensus.

A panel of agents each proposes a fix for a build error. After every round
the term-overlap consensus score is computed; when it crosses theta a
synthesis call merges the proposals into the final command sequence. Without
consensus after the round limit, the proposal most aligned with the rest of
the panel wins.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from buildpilot import prompts
from buildpilot.errors import AllAgentsMalformed
from buildpilot.gateway.types import ChatMessage, ChatRequest
from buildpilot.parsing import extract_commands, is_none_reply
from buildpilot.solver.classify import ErrorContext, error_report
from buildpilot.solver.consensus import DEFAULT_THETA, check_consensus, pairwise_overlap

logger = logging.getLogger(__name__)

REPROMPT_NOTE = (
    "\n\nYour previous reply could not be parsed. Reply with ONLY the fenced "
    "```bash block."
)


@dataclass
class DiscussionConfig:
    agents: int = 3
    rounds: int = 3
    theta: float = DEFAULT_THETA

    def __post_init__(self) -> None:
        if self.agents < 1:
            raise ValueError("agents must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must be in (0, 1]")


@dataclass(frozen=True)
class Solution:
    agent_index: int
    round_index: int
    commands: tuple[str, ...]
    raw: str


@dataclass(frozen=True)
class ConsensusResult:
    reached: bool
    round_reached: int | None
    overlap_score: float
    final_commands: tuple[str, ...]
    transcript: tuple[Solution, ...]


def _complete(gateway, model_id, tag, system, user) -> str:
    response = gateway.complete(
        ChatRequest(
            model_id=model_id,
            messages=[ChatMessage("system", system), ChatMessage("user", user)],
            tag=tag,
        )
    )
    return response.text


def _parse_solution(text: str) -> tuple[str, ...]:
    if is_none_reply(text):
        return ()
    return tuple(extract_commands(text))


def _most_aligned(solutions: dict[int, tuple[str, ...]]) -> tuple[str, ...]:
    """The solution with the highest summed overlap to the others."""
    best_index = None
    best_score = -1.0
    for i, commands in sorted(solutions.items()):
        score = sum(
            pairwise_overlap(list(commands), list(other))
            for j, other in sorted(solutions.items())
            if j != i
        )
        if score > best_score:
            best_score = score
            best_index = i
    return solutions[best_index] if best_index is not None else ()


def discuss(
    ctx: ErrorContext,
    gateway,
    model_id: str,
    config: DiscussionConfig | None = None,
) -> ConsensusResult:
    """Run the discussion for one error context.

    Round 1 proposals that fail to parse get one stricter re-ask; an agent
    still malformed after that drops out of the panel for the rest of the
    discussion. If nobody survives round 1, AllAgentsMalformed. In revision
    rounds a malformed reply keeps the agent's previous proposal.
    """
    config = config or DiscussionConfig()
    report = error_report(ctx)
    transcript: list[Solution] = []
    current: dict[int, tuple[str, ...]] = {}
    raw_by_agent: dict[int, str] = {}

    for agent in range(config.agents):
        system, user = prompts.solver_initial(agent, report, ctx.evidence)
        tag = f"{prompts.TAG_SOLVER}-{agent}"
        text = _complete(gateway, model_id, tag, system, user)
        commands = _parse_solution(text)
        if not commands:
            text = _complete(gateway, model_id, tag, system, user + REPROMPT_NOTE)
            commands = _parse_solution(text)
        if commands:
            current[agent] = commands
            raw_by_agent[agent] = text
            transcript.append(Solution(agent, 0, commands, text))
        else:
            logger.info("discussion agent %d produced nothing parseable", agent)
    if not current:
        raise AllAgentsMalformed("no discussion agent produced a parseable fix")

    reached, score = check_consensus(list(current.values()), config.theta)
    round_index = 0
    while not reached and round_index + 1 < config.rounds:
        round_index += 1
        revised: dict[int, tuple[str, ...]] = {}
        for agent, own_commands in sorted(current.items()):
            others = [
                (other, "\n".join(commands))
                for other, commands in sorted(current.items())
                if other != agent
            ]
            system, user = prompts.solver_revise(
                agent, report, "\n".join(own_commands), others
            )
            tag = f"{prompts.TAG_SOLVER}-{agent}"
            text = _complete(gateway, model_id, tag, system, user)
            commands = _parse_solution(text)
            if commands:
                revised[agent] = commands
                raw_by_agent[agent] = text
                transcript.append(Solution(agent, round_index, commands, text))
            else:
                revised[agent] = own_commands  # keep the previous proposal
        current = revised
        reached, score = check_consensus(list(current.values()), config.theta)

    if reached:
        solutions = [(i, "\n".join(cmds)) for i, cmds in sorted(current.items())]
        system, user = prompts.solver_synthesis(report, solutions)
        text = _complete(gateway, model_id, prompts.TAG_SYNTHESIS, system, user)
        final = _parse_solution(text)
        if not final:
            final = _most_aligned(current)
        return ConsensusResult(
            reached=True,
            round_reached=round_index + 1,
            overlap_score=score,
            final_commands=final,
            transcript=tuple(transcript),
        )
    return ConsensusResult(
        reached=False,
        round_reached=None,
        overlap_score=score,
        final_commands=_most_aligned(current),
        transcript=tuple(transcript),
    )
