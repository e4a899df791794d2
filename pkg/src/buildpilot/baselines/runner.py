"""Single-pass executor shared by all baseline methods.

Each method produces an InstructionPlan by its own means; the executor then
runs the steps in order with no error recovery, verifies targets, and lands
on the same outcome semantics as agent-driven sessions. The rule-table
method never touches a model, so its sessions carry zero ledger entries.
"""

from __future__ import annotations

import logging
import time
from dataclasses import replace
from pathlib import Path

from buildpilot.baselines.rag import BUILD_QUERY, rag_index, rag_query, save_index
from buildpilot.baselines.readme_ai import readme_ai_plan
from buildpilot.baselines.rules import detect_build_rule
from buildpilot.bench.verify import verify_targets
from buildpilot.config import RunConfig
from buildpilot.errors import (
    ExtractionFailure,
    NoCandidateFiles,
    NoRuleMatched,
    UnknownStrategy,
)
from buildpilot.orchestrator.flow import (
    StrategyContext,
    classify_shell_result,
    run_project,
)
from buildpilot.orchestrator.session import CompilationSession
from buildpilot.project import ProjectSpec
from buildpilot.sandbox.listing import parse_tree_paths

logger = logging.getLogger(__name__)

BASELINE_METHODS = ("ossfuzzgen", "readmeai", "rag")

# methods that never issue a model call; harnesses can skip gateway setup
NO_LLM_METHODS = frozenset({"ossfuzzgen"})

RAG_INDEX_DIR = "rag_index"
RAG_AUDIT_FILE = "rag_retrieved.json"


def _root_files(session) -> set[str]:
    names = {p for p in parse_tree_paths(session.fetch_structure())
             if "/" not in p}
    out = set()
    for name in names:
        st = session.stat(name)
        if st.exists and not st.is_dir:
            out.add(name)
    return out


def _make_plan(method: str, ctx: StrategyContext, out_dir: Path):
    session = ctx.dispatcher.session
    gateway = ctx.dispatcher.gateway
    model_id = ctx.dispatcher.model_id
    if method == "ossfuzzgen":
        return detect_build_rule(_root_files(session))
    if method == "readmeai":
        return readme_ai_plan(session, gateway, model_id,
                              ctx.project.name, out_dir=out_dir)
    index = rag_index(session, gateway, model_id)
    save_index(index, out_dir / RAG_INDEX_DIR)
    return rag_query(index, BUILD_QUERY, gateway, model_id,
                     project_name=ctx.project.name,
                     audit_path=out_dir / RAG_AUDIT_FILE)


def baseline_strategy(method: str, out_dir: Path):
    """Strategy adapter: plan once, execute once, verify, stop."""

    def strategy(ctx: StrategyContext) -> None:
        run = ctx.run
        try:
            plan = _make_plan(method, ctx, out_dir)
        except (NoRuleMatched, NoCandidateFiles) as exc:
            run.fail("NavigationFailed", str(exc))
            return
        except ExtractionFailure as exc:
            run.fail("ExtractionFailed", str(exc))
            return
        run.advance("Compiling", note=plan.source_path)
        for step in plan.steps:
            result = ctx.dispatcher.run_shell(step)
            if classify_shell_result(result) != "ok":
                run.fail("CompileFailed", f"step failed: {step}")
                return
        if ctx.project.expected_targets:
            ok, _reports = verify_targets(ctx.dispatcher.session,
                                          ctx.project.expected_targets)
            if not ok:
                run.fail("CompileFailed", "expected outputs not produced")
                return
        run.advance("Succeeded", note="all targets verified")

    return strategy


def run_baseline(
    method: str,
    project: ProjectSpec,
    config: RunConfig,
    gateway,
    runtime,
    clock=time.monotonic,
    out_dir: Path | None = None,
) -> CompilationSession:
    """Run one baseline method against one project, single pass."""
    if method not in BASELINE_METHODS:
        raise UnknownStrategy(
            f"unknown baseline {method!r}; valid: {', '.join(BASELINE_METHODS)}")
    cfg = replace(config, strategy=method, method=method)
    out = Path(out_dir) if out_dir is not None else cfg.run_dir / project.name
    return run_project(project, cfg, gateway, runtime,
                       strategy_fn=baseline_strategy(method, out),
                       clock=clock, out_dir=out)
