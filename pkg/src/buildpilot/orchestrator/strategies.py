"""Alternative run strategies: reactive loop, plan-execute, native tool calls.

All three skip the staged candidate/extraction phases and move straight to
Compiling; verification against expected targets is still the only path to
Succeeded, regardless of what the driving agent claims.
"""

from __future__ import annotations

import logging
import re

from buildpilot.config import normalize_tool_id
from buildpilot.errors import ConfigError, ProviderLacksToolCalling, UnknownStrategy
from buildpilot.gateway.types import ChatMessage, ChatRequest, ToolSpec
from buildpilot.navigator.locate import CandidateFile
from buildpilot.orchestrator.budget import BudgetExceeded
from buildpilot.orchestrator.flow import StrategyContext, _verify, flow_strategy
from buildpilot import prompts
from buildpilot.parsing import extract_commands
from buildpilot.solver.classify import ErrorContext

logger = logging.getLogger(__name__)

MAX_REACT_ITERATIONS = 60
MAX_TOOLCALL_ITERATIONS = 40
MAX_REPLANS = 2
MALFORMED_STREAK_LIMIT = 3
OBSERVATION_LIMIT = 2000
STDERR_TAIL = 2000

_ACTION = re.compile(r"Action:\s*([A-Za-z_][\w-]*)\s*\((.*)\)", re.DOTALL)
_FINAL = re.compile(r"Final:\s*(succeeded|failed)", re.IGNORECASE)


def _clip(text: str, limit: int = OBSERVATION_LIMIT) -> str:
    if len(text) <= limit:
        return text
    return text[:limit] + "\n…[observation truncated]"


def _strip_quotes(arg: str) -> str:
    arg = arg.strip()
    if len(arg) >= 2 and arg[0] in "\"'" and arg[-1] == arg[0]:
        return arg[1:-1]
    return arg


def perform_tool(ctx: StrategyContext, tool: str, arg: str) -> str:
    """Run one named tool for an agent and phrase the result as text.

    Tool failures become observations rather than exceptions; only budget
    overruns propagate, since they must end the run.
    """
    dispatcher = ctx.dispatcher
    try:
        tool = normalize_tool_id(tool)
    except ConfigError as exc:
        return f"tool error: {exc}"
    if not dispatcher.enabled(tool):
        return f"tool {tool} is disabled in this run"
    arg = _strip_quotes(arg)
    try:
        if tool == "shell":
            result = dispatcher.run_shell(arg)
            return (f"exit {result.exit_code}\nstdout:\n{result.stdout_excerpt}\n"
                    f"stderr:\n{result.stderr_excerpt}")
        if tool == "file_navigator":
            structure = dispatcher.fetch_structure()
            candidates = dispatcher.locate_candidates(structure)
            return "\n".join(f"{c.rank}. {c.path}" for c in candidates)
        if tool == "instruction_extractor":
            candidate = CandidateFile(path=arg, rank=1, source="agent")
            plan = dispatcher.extract_plan(candidate)
            return "\n".join(plan.steps)
        if tool == "website_search":
            return dispatcher.web_search(arg)
        # multi_agent_discussion: the agent supplies the error description.
        err = ErrorContext(
            command="(agent described)", exit_code=1,
            stderr_excerpt=arg[:OBSERVATION_LIMIT], stdout_excerpt="",
            os_fingerprint=ctx.os_fingerprint)
        result = dispatcher.discuss_error(err)
        if result is None or not result.final_commands:
            return "the panel produced no commands"
        return "\n".join(result.final_commands)
    except BudgetExceeded:
        raise
    except Exception as exc:
        logger.info("%s: %s tool failed: %s", ctx.project.name, tool, exc)
        return f"tool error: {type(exc).__name__}: {exc}"


def _finish(ctx: StrategyContext, claimed_success: bool) -> None:
    """Terminal verdict: targets on disk decide, not the agent's claim."""
    ok, _ = _verify(ctx)
    if ok:
        ctx.run.advance("Succeeded", note="all targets verified")
    elif claimed_success:
        ctx.run.fail("CompileFailed", "success claimed but targets unverified")
    else:
        ctx.run.fail("CompileFailed", "agent gave up")


def react_strategy(ctx: StrategyContext) -> None:
    """Thought/Action loop with textual observations."""
    run = ctx.run
    run.advance("Compiling")
    history: list[str] = [f"Repository: {ctx.project.name}"]
    malformed_streak = 0

    for _ in range(MAX_REACT_ITERATIONS):
        system, user = prompts.react_step(history)
        response = ctx.dispatcher.gateway.complete(ChatRequest(
            model_id=ctx.dispatcher.model_id,
            messages=[ChatMessage("system", system), ChatMessage("user", user)],
            tag=prompts.TAG_REACT,
        ))
        text = response.text.strip()
        final = _FINAL.search(text)
        if final:
            _finish(ctx, final.group(1).lower() == "succeeded")
            return
        action = _ACTION.search(text)
        if not action:
            malformed_streak += 1
            if malformed_streak >= MALFORMED_STREAK_LIMIT:
                run.fail("CompileFailed",
                         f"{malformed_streak} malformed replies in a row")
                return
            history.append(text)
            history.append("Observation: reply was not in the required "
                           "Thought/Action format; try again")
            continue
        malformed_streak = 0
        observation = perform_tool(ctx, action.group(1), action.group(2))
        history.append(text)
        history.append(f"Observation: {_clip(observation)}")

    run.fail("BudgetExhausted", f"{MAX_REACT_ITERATIONS} iterations used")


def plan_execute_strategy(ctx: StrategyContext) -> None:
    """Plan the whole build once, execute, replan on failure a bounded
    number of times."""
    run = ctx.run
    dispatcher = ctx.dispatcher
    run.advance("Compiling")
    structure = dispatcher.fetch_structure()

    system, user = prompts.plan_initial(structure, "")
    response = dispatcher.gateway.complete(ChatRequest(
        model_id=dispatcher.model_id,
        messages=[ChatMessage("system", system), ChatMessage("user", user)],
        tag=prompts.TAG_PLANNER,
    ))
    plan = extract_commands(response.text)
    if not plan:
        run.fail("CompileFailed", "planner produced no commands")
        return

    replans = 0

    def replan(failed: str, stderr: str) -> list[str]:
        nonlocal replans
        replans += 1
        sys2, usr2 = prompts.plan_revise(plan, failed, stderr[-STDERR_TAIL:])
        reply = dispatcher.gateway.complete(ChatRequest(
            model_id=dispatcher.model_id,
            messages=[ChatMessage("system", sys2), ChatMessage("user", usr2)],
            tag=prompts.TAG_PLANNER,
        ))
        return extract_commands(reply.text)

    while True:
        failed_step = ""
        failed_stderr = ""
        for step in plan:
            result = dispatcher.run_shell(step)
            if not result.ok:
                failed_step, failed_stderr = step, result.stderr_excerpt
                break
        else:
            ok, err = _verify(ctx)
            if ok:
                run.advance("Succeeded", note="all targets verified")
                return
            failed_step = "(verify build outputs)"
            failed_stderr = err.stderr_excerpt
        if replans >= MAX_REPLANS:
            run.fail("CompileFailed", f"step failed: {failed_step}")
            return
        plan = replan(failed_step, failed_stderr)
        if not plan:
            run.fail("CompileFailed", "replanning produced no commands")
            return


TOOL_SPECS = {
    "shell": ToolSpec(
        name="shell",
        description="Run a shell command in the project workspace.",
        parameters={"type": "object",
                    "properties": {"command": {"type": "string"}},
                    "required": ["command"]}),
    "file_navigator": ToolSpec(
        name="file_navigator",
        description="List ranked build-guide candidate files.",
        parameters={"type": "object", "properties": {}}),
    "instruction_extractor": ToolSpec(
        name="instruction_extractor",
        description="Extract build commands from a documentation file.",
        parameters={"type": "object",
                    "properties": {"path": {"type": "string"}},
                    "required": ["path"]}),
    "website_search": ToolSpec(
        name="website_search",
        description="Search the web for help with a build error.",
        parameters={"type": "object",
                    "properties": {"query": {"type": "string"}},
                    "required": ["query"]}),
    "multi_agent_discussion": ToolSpec(
        name="multi_agent_discussion",
        description="Convene a panel discussion on the described build error.",
        parameters={"type": "object",
                    "properties": {"error": {"type": "string"}},
                    "required": ["error"]}),
}

_TOOLCALL_ARG_KEY = {
    "shell": "command",
    "instruction_extractor": "path",
    "website_search": "query",
    "multi_agent_discussion": "error",
}


def toolcall_strategy(ctx: StrategyContext) -> None:
    """Native provider tool calling; requires model support."""
    run = ctx.run
    dispatcher = ctx.dispatcher
    if not dispatcher.gateway.supports_tool_calls(dispatcher.model_id):
        raise ProviderLacksToolCalling(
            f"model {dispatcher.model_id!r} cannot do native tool calls; "
            "use --strategy react instead")
    run.advance("Compiling")

    tools = [spec for tool_id, spec in TOOL_SPECS.items()
             if dispatcher.enabled(tool_id)]
    messages = [
        ChatMessage("system", prompts.TOOLCALL_SYSTEM),
        ChatMessage("user", f"Compile the repository {ctx.project.name!r} "
                            "mounted at the workspace root."),
    ]
    idle_streak = 0

    for _ in range(MAX_TOOLCALL_ITERATIONS):
        response = dispatcher.gateway.complete(ChatRequest(
            model_id=dispatcher.model_id,
            messages=list(messages),
            tag=prompts.TAG_TOOLCALL,
            tools=tools,
        ))
        if response.tool_calls:
            idle_streak = 0
            if response.text:
                messages.append(ChatMessage("assistant", response.text))
            for call in response.tool_calls:
                key = _TOOLCALL_ARG_KEY.get(call.name, "")
                arg = str(call.arguments.get(key, "")) if key else ""
                observation = perform_tool(ctx, call.name, arg)
                messages.append(ChatMessage(
                    "user",
                    f"Result of {call.name} (call {call.call_id}):\n"
                    f"{_clip(observation)}"))
            continue
        verdict = response.text.strip().upper()
        if verdict.startswith("SUCCEEDED") or verdict.startswith("FAILED"):
            _finish(ctx, verdict.startswith("SUCCEEDED"))
            return
        idle_streak += 1
        if idle_streak >= MALFORMED_STREAK_LIMIT:
            run.fail("CompileFailed", "agent stopped calling tools without "
                                      "a SUCCEEDED or FAILED verdict")
            return
        messages.append(ChatMessage("assistant", response.text))
        messages.append(ChatMessage(
            "user", "Call a tool, or reply starting with SUCCEEDED or FAILED."))

    run.fail("BudgetExhausted", f"{MAX_TOOLCALL_ITERATIONS} iterations used")


STRATEGIES = {
    "flow": flow_strategy,
    "react": react_strategy,
    "plan_execute": plan_execute_strategy,
    "toolcall": toolcall_strategy,
}


def resolve_strategy(name: str):
    try:
        return STRATEGIES[name]
    except KeyError:
        raise UnknownStrategy(
            f"unknown strategy {name!r}; valid: {', '.join(sorted(STRATEGIES))}"
        ) from None
