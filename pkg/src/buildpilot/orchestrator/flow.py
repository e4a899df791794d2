"""The staged compilation flow and the shared per-project run wrapper.

The flow walks five stages: map the repository structure, rank build-guide
candidates, extract an instruction plan, execute it step by step, and verify
the expected artifacts. Failing steps go through escalating recovery: a
bounded number of direct fix attempts, then a bounded number of error-solver
activations (web evidence plus panel discussion).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from buildpilot.config import RunConfig
from buildpilot.errors import (
    ExtractionFailure,
    NoCandidate,
    NoResults,
    ProviderLacksToolCalling,
    SearchUnavailable,
)
from buildpilot.gateway.types import ChatMessage, ChatRequest
from buildpilot.orchestrator.acquire import AcquisitionError, acquire_repo
from buildpilot.orchestrator.budget import BudgetExceeded, BudgetTracker
from buildpilot.orchestrator.dispatch import ToolDispatcher
from buildpilot.orchestrator.session import (
    CompilationSession,
    SessionOutcome,
    TranscriptCanonicalizer,
)
from buildpilot.bench.verify import verify_targets
from buildpilot.project import ProjectSpec
from buildpilot import prompts
from buildpilot.parsing import extract_commands, is_none_reply
from buildpilot.sandbox.types import ExecResult, SandboxConfig
from buildpilot.solver.classify import ErrorContext, classify_error
from buildpilot.solver.discussion import REPROMPT_NOTE, AllAgentsMalformed

logger = logging.getLogger(__name__)

STDERR_EXCERPT = 2000
STDOUT_EXCERPT = 1000


@dataclass
class StrategyContext:
    """Everything a strategy needs to drive one run to a terminal phase."""

    dispatcher: ToolDispatcher
    run: CompilationSession
    project: ProjectSpec
    os_fingerprint: str = ""
    extra: dict = field(default_factory=dict)


def classify_shell_result(result: ExecResult, probe: bool = False) -> str:
    """Success test for one command: ok, timeout, build_error, or noise.

    Probe commands (informational, not build steps) never escalate; their
    failures classify as noise.
    """
    if result.exit_code == 0:
        return "ok"
    if result.timed_out:
        return "timeout"
    return "noise" if probe else "build_error"


def self_fix(ctx: ErrorContext, attempt_index: int, gateway, model_id: str,
             max_attempts: int = 2) -> list[str]:
    """One direct-fix proposal from the coordinating agent.

    Single completion, no tools. A reply that neither declines nor contains
    a fenced command block gets exactly one strict re-prompt; if that also
    fails to parse, the empty list tells the caller to escalate.
    """
    if attempt_index >= max_attempts:
        raise ValueError(
            f"attempt_index {attempt_index} out of range (max {max_attempts})")
    system, user = prompts.self_fix(
        ctx.command, ctx.stderr_excerpt, ctx.stdout_excerpt,
        ctx.classification, ctx.os_fingerprint, attempt_index + 1,
        ctx.prior_attempts)
    for prompt_text in (user, user + REPROMPT_NOTE):
        response = gateway.complete(ChatRequest(
            model_id=model_id,
            messages=[ChatMessage("system", system),
                      ChatMessage("user", prompt_text)],
            tag=prompts.TAG_MASTER,
        ))
        if is_none_reply(response.text):
            return []
        commands = extract_commands(response.text)
        if commands:
            return commands
    return []


def _error_context(ctx: StrategyContext, command: str, result) -> ErrorContext:
    return ErrorContext(
        command=command,
        exit_code=result.exit_code,
        stderr_excerpt=result.stderr_excerpt[-STDERR_EXCERPT:],
        stdout_excerpt=result.stdout_excerpt[-STDOUT_EXCERPT:],
        os_fingerprint=ctx.os_fingerprint,
    )


def _run_step(ctx: StrategyContext, command: str):
    """Execute one plan step; (ok, error context or None)."""
    result = ctx.dispatcher.run_shell(command)
    if classify_shell_result(result) in ("ok", "noise"):
        return True, None
    return False, _error_context(ctx, command, result)


def _self_fix(ctx: StrategyContext, err: ErrorContext, retry) -> tuple[bool, ErrorContext | None]:
    """Direct fix attempts, bounded per incident.

    Returns (recovered, last error). An empty proposal means the agent
    declined or could not answer, which ends the attempts early so the
    solver can take over.
    """
    dispatcher = ctx.dispatcher
    limit = dispatcher.budget.limits.max_self_fix_attempts
    last_err = err
    for attempt in range(limit):
        commands = self_fix(last_err, attempt, dispatcher.gateway,
                            dispatcher.model_id, max_attempts=limit)
        if not commands:
            logger.info("%s: fix agent declined on attempt %d",
                        ctx.project.name, attempt + 1)
            return False, last_err
        for fix in commands:
            dispatcher.run_shell(fix)
        last_err.prior_attempts.append(
            f"attempt {attempt + 1}: ran {'; '.join(commands)}")
        ok, retry_err = retry()
        if ok:
            return True, None
        last_err = retry_err
        last_err.prior_attempts = err.prior_attempts
    return False, last_err


def _single_solver(ctx: StrategyContext, err: ErrorContext) -> tuple[str, ...]:
    """Fallback when the discussion tool is ablated: one panelist, no rounds."""
    from buildpilot.solver.classify import error_report

    system, user = prompts.solver_initial(0, error_report(err), err.evidence)
    response = ctx.dispatcher.gateway.complete(ChatRequest(
        model_id=ctx.dispatcher.model_id,
        messages=[ChatMessage("system", system), ChatMessage("user", user)],
        tag=f"{prompts.TAG_SOLVER}-0",
    ))
    if is_none_reply(response.text):
        return ()
    return tuple(extract_commands(response.text))


def _solver_pass(ctx: StrategyContext, err: ErrorContext, retry) -> tuple[bool, ErrorContext | None]:
    """One error-solver activation: gather evidence, discuss, repair, retry."""
    dispatcher = ctx.dispatcher
    dispatcher.budget.charge_error_solver()
    query = f"{err.classification} error building {ctx.project.name}: " + \
        " ".join(err.stderr_excerpt.strip().splitlines()[-1:])
    try:
        err.evidence = dispatcher.web_search(query)
    except (SearchUnavailable, NoResults) as exc:
        logger.info("%s: no web evidence (%s)", ctx.project.name, exc)
        err.evidence = ""

    try:
        consensus = dispatcher.discuss_error(err)
    except AllAgentsMalformed:
        return False, err
    commands = consensus.final_commands if consensus else _single_solver(ctx, err)
    if not commands:
        return False, err
    for command in commands:
        dispatcher.run_shell(command)
    err.prior_attempts.append(f"solver ran {'; '.join(commands)}")
    ok, retry_err = retry()
    if ok:
        return True, None
    retry_err.prior_attempts = err.prior_attempts
    return False, retry_err


def _recover(ctx: StrategyContext, err: ErrorContext, retry) -> bool:
    """Escalating recovery for one failing step until fixed or out of road.

    Phase walk per incident: Compiling -> SelfFixing (bounded attempts) ->
    ErrorSolving (bounded activations) -> Compiling on success. The caller
    fails the run when this returns False.
    """
    run = ctx.run
    while True:
        classify_error(err, ctx.dispatcher.gateway, ctx.dispatcher.model_id)
        run.advance("SelfFixing", note=err.classification)
        fixed, err = _self_fix(ctx, err, retry)
        if fixed:
            run.advance("Compiling", note="self-fix recovered")
            return True
        if not ctx.dispatcher.budget.solver_available:
            return False
        run.advance("ErrorSolving")
        fixed, err = _solver_pass(ctx, err, retry)
        if fixed:
            run.advance("Compiling", note="solver recovered")
            return True
        run.advance("Compiling", note="solver attempt failed")
        if err is None:
            return False


def _verify(ctx: StrategyContext) -> tuple[bool, ErrorContext | None]:
    if not ctx.project.expected_targets:
        # nothing declared, nothing to check: clean steps decide the verdict
        return True, None
    ok, reports = verify_targets(ctx.dispatcher.session,
                                 ctx.project.expected_targets)
    if ok:
        return True, None
    missing = "\n".join(
        f"{r.target.kind} {r.target.path}: {r.detail or 'unverified'}"
        for r in reports if not r.verified) or "no expected targets declared"
    err = ErrorContext(
        command="(verify build outputs)",
        exit_code=1,
        stderr_excerpt=f"expected build outputs missing or invalid:\n{missing}",
        stdout_excerpt="",
        os_fingerprint=ctx.os_fingerprint,
        classification="configuration",
    )
    return False, err


def flow_strategy(ctx: StrategyContext) -> None:
    """Staged pipeline: structure, candidates, instructions, execute, verify."""
    run = ctx.run
    dispatcher = ctx.dispatcher

    structure = dispatcher.fetch_structure()
    run.advance("StructureMapped")

    try:
        candidates = dispatcher.locate_candidates(structure)
    except NoCandidate as exc:
        run.fail("NavigationFailed", str(exc))
        return
    run.advance("CandidatesFound", note=candidates[0].path)

    plan = None
    for candidate in candidates:
        try:
            plan = dispatcher.extract_plan(candidate)
            break
        except ExtractionFailure as exc:
            logger.info("%s: extraction from %s failed: %s",
                        ctx.project.name, candidate.path, exc)
    if plan is None:
        run.fail("ExtractionFailed", "no candidate yielded instructions")
        return
    run.advance("InstructionsExtracted", note=plan.source_path)
    run.advance("Compiling")

    for step in plan.steps:
        ok, err = _run_step(ctx, step)
        if ok:
            continue

        def retry(step=step):
            return _run_step(ctx, step)

        if not _recover(ctx, err, retry):
            run.fail("CompileFailed", f"step failed: {step}")
            return

    ok, err = _verify(ctx)
    if not ok and not _recover(ctx, err, lambda: _verify(ctx)):
        run.fail("CompileFailed", "expected outputs not produced")
        return
    run.advance("Succeeded", note="all targets verified")


def _resolve_sandbox(project: ProjectSpec, config: RunConfig, workdir, run_dir):
    kwargs = dict(
        mount_source=workdir,
        image=config.image,
        network=config.network,
        label=config.label or f"run-{project.name}",
        log_path=run_dir / "shell.log",
    )
    if project.timeout_override:
        kwargs["per_command_timeout"] = project.timeout_override
    return SandboxConfig(**kwargs)


def run_project(
    project: ProjectSpec,
    config: RunConfig,
    gateway,
    runtime,
    strategy_fn=None,
    search_backend=None,
    fetcher=None,
    clock=time.monotonic,
    out_dir: Path | None = None,
) -> CompilationSession:
    """Acquire, sandbox, run a strategy, verify, and always clean up.

    Returns the terminal CompilationSession. The session transcript lands in
    out_dir (default <run_dir>/<project>) as session.jsonl alongside the
    shell log, and the composed SessionOutcome is attached to the session.
    """
    if strategy_fn is None:
        from buildpilot.orchestrator.strategies import resolve_strategy

        strategy_fn = resolve_strategy(config.strategy)

    run = CompilationSession(project.name, config.strategy, config.model_id,
                            clock=clock)
    budget = BudgetTracker(config.budget, ledger=gateway.ledger, clock=clock)
    run_dir = Path(out_dir) if out_dir is not None else config.run_dir / project.name
    run_dir.mkdir(parents=True, exist_ok=True)
    cost_mark = gateway.ledger.total_cost_usd()

    session = None
    try:
        try:
            workdir = acquire_repo(project, run_dir / "src")
        except AcquisitionError as exc:
            run.fail("SandboxError", str(exc))
            return run
        run.advance("RepoAcquired")

        session = runtime.create_session(
            _resolve_sandbox(project, config, workdir, run_dir))
        run.canonicalizer = TranscriptCanonicalizer(
            workdir=session.workdir,
            scratch=getattr(session, "_scratch", ""))
        dispatcher = ToolDispatcher(
            session, gateway, config.model_id, run, budget,
            disabled_tools=config.disabled_tools,
            search_backend=search_backend,
            discussion=config.discussion,
            fetcher=fetcher,
            follow_urls=config.follow_urls,
            clock=clock,
        )
        ctx = StrategyContext(dispatcher=dispatcher, run=run, project=project,
                              os_fingerprint=config.image or "host process")
        try:
            strategy_fn(ctx)
        except BudgetExceeded as exc:
            if not run.terminal:
                run.fail("BudgetExhausted", str(exc))
        if not run.terminal:
            run.fail("SandboxError", "strategy returned without a verdict")
    except ProviderLacksToolCalling:
        # Configuration problem, not a per-project outcome; let it surface.
        raise
    except Exception:
        logger.exception("%s: run crashed", project.name)
        if not run.terminal:
            run.fail("SandboxError", "unhandled exception")
    finally:
        if session is not None:
            session.destroy()
        if run.terminal:
            run.outcome = SessionOutcome(
                status="success" if run.succeeded else "failure",
                failure_reason=run.failure_reason,
                elapsed_seconds=run.elapsed_seconds(),
                cost_usd=gateway.ledger.total_cost_usd() - cost_mark,
                commands_run=run.tool_count("shell"),
                error_solver_rounds_used=budget.error_solver_activations,
            )
        try:
            run.write_transcript(run_dir / "session.jsonl")
        except OSError:
            logger.exception("%s: transcript write failed", project.name)
    return run
