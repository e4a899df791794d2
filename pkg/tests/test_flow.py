"""End-to-end flow runs over fake sandboxes and scripted providers."""

import random

import pytest

from buildpilot.config import BudgetLimits, RunConfig
from buildpilot.errors import ProviderLacksToolCalling
from buildpilot.gateway.ledger import UsageLedger
from buildpilot.gateway.service import Gateway
from buildpilot.orchestrator.flow import (
    classify_shell_result,
    run_project,
    self_fix,
)
from buildpilot.project import ProjectSpec, Target
from buildpilot.solver.classify import ErrorContext

from conftest import make_registry
from fakes import FakeRuntime, TaggedProvider, fail, ok

ELF = b"\x7fELF" + bytes(12)

GUIDE = "Build with:\n\n```\nmake\n```\n"

REPO_FILES = {
    "README.md": GUIDE,
    "Makefile": "all:\n\thello\n",
    "main.c": "int main(void) { return 0; }\n",
}

NAVIGATION = {
    "SearchAgent-I": ["1. README.md"],
    "SearchAgent-II": ["1. README.md"],
    "SummarizeAgent": ["```bash\nmake\n```"],
}


def build_on_make(cmd, sess):
    if cmd == "make":
        sess.files["hello"] = ELF
        return ok("built")
    return ok()


def make_project(tmp_path, name="demo"):
    source = tmp_path / f"{name}-src"
    source.mkdir(parents=True, exist_ok=True)
    for rel, content in REPO_FILES.items():
        (source / rel).write_text(content)
    return ProjectSpec(
        name=name, repo_url=str(source),
        expected_targets=(Target("hello", "executable"),))


def run_once(tmp_path, by_tag, handler=build_on_make, files=REPO_FILES,
             budget=None, disabled=(), strategy="flow"):
    project = make_project(tmp_path)
    runtime = FakeRuntime(files=dict(files), handler=handler)
    provider = TaggedProvider(by_tag=by_tag)
    ledger = UsageLedger()
    gateway = Gateway(make_registry(), ledger, lambda p: provider,
                      sleep=lambda _s: None)
    config = RunConfig(
        model_id="test-model", strategy=strategy,
        run_dir=tmp_path / "runs", budget=budget or BudgetLimits(),
        disabled_tools=frozenset(disabled))
    run = run_project(project, config, gateway, runtime)
    return run, runtime, ledger, provider


def phases(run):
    return [t.to_phase for t in run.transitions]


def test_flow_happy_path(tmp_path):
    run, runtime, ledger, _ = run_once(tmp_path, dict(NAVIGATION))
    assert run.succeeded, run.to_record()
    assert phases(run) == [
        "RepoAcquired", "StructureMapped", "CandidatesFound",
        "InstructionsExtracted", "Compiling", "Succeeded"]
    by_tool = {}
    for inv in run.invocations:
        by_tool[inv.tool_id] = by_tool.get(inv.tool_id, 0) + 1
    assert by_tool == {"file_navigator": 1, "instruction_extractor": 1,
                       "shell": 1}
    assert runtime.list_sessions() == []
    assert ledger.total_tokens() > 0
    assert (tmp_path / "runs" / "demo" / "session.jsonl").exists()
    outcome = run.outcome
    assert outcome is not None and outcome.status == "success"
    assert outcome.failure_reason == ""
    assert outcome.commands_run == 1
    assert outcome.error_solver_rounds_used == 0
    assert outcome.cost_usd == ledger.total_cost_usd()


def test_flow_transcripts_are_reproducible(tmp_path):
    run_a, *_ = run_once(tmp_path / "a", dict(NAVIGATION))
    run_b, *_ = run_once(tmp_path / "b", dict(NAVIGATION))
    assert run_a.succeeded and run_b.succeeded
    assert run_a.transcript_digest() == run_b.transcript_digest()


def test_flow_self_fix_recovers(tmp_path):
    state = {"deps": False}

    def handler(cmd, sess):
        if "apt-get install" in cmd:
            state["deps"] = True
            return ok()
        if cmd == "make":
            if not state["deps"]:
                return fail("main.c:1:10: fatal error: zlib.h: "
                            "No such file or directory")
            sess.files["hello"] = ELF
            return ok()
        return ok()

    script = dict(NAVIGATION)
    script["MasterAgent"] = ["```bash\nsudo apt-get install -y zlib1g-dev\n```"]
    run, *_ = run_once(tmp_path, script, handler=handler)
    assert run.succeeded, run.to_record()
    assert "SelfFixing" in phases(run)
    assert "ErrorSolving" not in phases(run)
    # The incident carried the rule-based classification into the fix prompt.
    selffix_note = next(t.note for t in run.transitions
                        if t.to_phase == "SelfFixing")
    assert selffix_note == "dependency"


def test_flow_escalates_to_solver(tmp_path):
    state = {"deps": False}

    def handler(cmd, sess):
        if "apt-get install" in cmd:
            state["deps"] = True
            return ok()
        if cmd == "make":
            if not state["deps"]:
                return fail("configure: error: zlib not found")
            sess.files["hello"] = ELF
            return ok()
        return ok()

    fix = "```bash\nsudo apt-get install -y zlib1g-dev\n```"
    script = dict(NAVIGATION)
    script["MasterAgent"] = ["NONE"]
    script["Solver-0"] = [fix]
    script["Solver-1"] = [fix]
    script["Solver-2"] = [fix]
    script["SolverSynthesis"] = [fix]
    run, _, ledger, _ = run_once(tmp_path, script, handler=handler,
                                 disabled=["website_search"])
    assert run.succeeded, run.to_record()
    assert "SelfFixing" in phases(run) and "ErrorSolving" in phases(run)
    assert run.tool_count("multi_agent_discussion") == 1
    assert run.tool_count("website_search") == 0


def test_flow_budget_exhaustion(tmp_path):
    script = dict(NAVIGATION)
    script["SummarizeAgent"] = ["```bash\n./configure\nmake\n```"]
    run, runtime, *_ = run_once(
        tmp_path, script, budget=BudgetLimits(max_shell_commands=1))
    assert run.phase == "Failed"
    assert run.failure_reason == "BudgetExhausted"
    assert run.tool_count("shell") == 1
    assert runtime.list_sessions() == []


def test_flow_navigation_failure(tmp_path):
    files = {"main.c": "int main(void) { return 0; }\n"}
    script = {"SearchAgent-I": ["1. BUILD.md"], "SearchAgent-II": ["1. BUILD.md"]}
    run, *_ = run_once(tmp_path, script, files=files)
    assert run.failure_reason == "NavigationFailed"
    assert phases(run) == ["RepoAcquired", "StructureMapped", "Failed"]


def test_flow_extraction_failure(tmp_path):
    script = dict(NAVIGATION)
    script["SummarizeAgent"] = ["NONE"]
    run, *_ = run_once(tmp_path, script)
    assert run.failure_reason == "ExtractionFailed"
    assert phases(run)[-1] == "Failed"
    assert "CandidatesFound" in phases(run)


def test_flow_compile_failure_after_recovery(tmp_path):
    def handler(cmd, sess):
        if cmd == "make":
            return fail("ld: cannot find -lmagic")
        return ok()

    script = dict(NAVIGATION)
    script["MasterAgent"] = ["NONE"] * 8
    script["Solver-0"] = ["NONE"] * 8
    run, _, ledger, _ = run_once(
        tmp_path, script, handler=handler,
        disabled=["website_search", "multi_agent_discussion"])
    assert run.failure_reason == "CompileFailed"
    # All three solver activations were spent before giving up.
    solver_visits = sum(1 for p in phases(run) if p == "ErrorSolving")
    assert solver_visits == 3


def test_flow_success_claim_requires_targets(tmp_path):
    # make exits 0 but produces nothing; verification must catch it.
    def handler(cmd, sess):
        return ok()

    script = dict(NAVIGATION)
    script["MasterAgent"] = ["NONE"] * 8
    run, *_ = run_once(tmp_path, script, handler=handler,
                       disabled=["website_search", "multi_agent_discussion"])
    assert run.failure_reason == "CompileFailed"
    assert not run.succeeded


def test_flow_acquisition_failure(tmp_path):
    project = ProjectSpec(name="ghost", repo_url=str(tmp_path / "ghost"),
                          expected_targets=(Target("x", "executable"),))
    runtime = FakeRuntime()
    gateway = Gateway(make_registry(), UsageLedger(),
                      lambda p: TaggedProvider(), sleep=lambda _s: None)
    run = run_project(project, RunConfig(model_id="test-model",
                                         run_dir=tmp_path / "runs"),
                      gateway, runtime)
    assert run.failure_reason == "SandboxError"
    assert runtime.sessions == []


def test_flow_sessions_destroyed_on_crash(tmp_path):
    def handler(cmd, sess):
        raise RuntimeError("sandbox blew up")

    run, runtime, *_ = run_once(tmp_path, dict(NAVIGATION), handler=handler)
    assert run.failure_reason == "SandboxError"
    assert runtime.list_sessions() == []
    assert runtime.peak_sessions() == 1


def test_toolcall_requires_capable_model(tmp_path):
    project = make_project(tmp_path)
    runtime = FakeRuntime(files=dict(REPO_FILES))
    provider = TaggedProvider(supports_tool_calls=False)
    gateway = Gateway(make_registry(), UsageLedger(), lambda p: provider,
                      sleep=lambda _s: None)
    config = RunConfig(model_id="test-model", strategy="toolcall",
                       run_dir=tmp_path / "runs")
    with pytest.raises(ProviderLacksToolCalling):
        run_project(project, config, gateway, runtime)
    assert runtime.list_sessions() == []


def test_budget_fuzz_never_overruns(tmp_path):
    """Randomized runs must respect every hard budget and leak no sessions."""
    rng = random.Random(20260816)
    fenced = [
        "```bash\nmake\n```",
        "```bash\n./configure\nmake\n```",
        "```bash\nsudo apt-get install -y libfoo-dev\nmake\n```",
        "NONE",
        "no commands here",
    ]
    total_sessions = 0
    for trial in range(200):
        fail_rate = rng.random() * 0.9

        def handler(cmd, sess, fail_rate=fail_rate, rng=rng):
            if rng.random() < fail_rate:
                return fail("configure: error: random breakage")
            if cmd == "make" and rng.random() < 0.5:
                sess.files["hello"] = ELF
            return ok()

        script = {
            "SearchAgent-I": ["1. README.md"],
            "SearchAgent-II": ["1. README.md"],
            "SummarizeAgent": [rng.choice(fenced[:3])],
        }
        limits = BudgetLimits(
            max_shell_commands=rng.randint(1, 8),
            max_self_fix_attempts=rng.randint(0, 2),
            max_error_solver_activations=rng.randint(0, 3),
        )
        runtime = FakeRuntime(files=dict(REPO_FILES), handler=handler)
        provider = TaggedProvider(by_tag=script,
                                  default=rng.choice(fenced))
        ledger = UsageLedger()
        gateway = Gateway(make_registry(), ledger, lambda p: provider,
                          sleep=lambda _s: None)
        budget_dir = tmp_path / f"trial{trial}"
        config = RunConfig(model_id="test-model", run_dir=budget_dir,
                           budget=limits,
                           disabled_tools=frozenset(
                               rng.sample(["website_search",
                                           "multi_agent_discussion"],
                                          rng.randint(0, 2))))
        project = make_project(tmp_path)
        run = run_project(project, config, gateway, runtime)

        assert run.terminal
        assert run.failure_reason != "SandboxError", run.to_record()
        assert run.tool_count("shell") <= limits.max_shell_commands
        solver_visits = sum(
            1 for t in run.transitions if t.to_phase == "ErrorSolving")
        assert solver_visits <= limits.max_error_solver_activations
        assert runtime.list_sessions() == []
        total_sessions += runtime.peak_sessions()
    assert total_sessions == 200


# --- step classification and the direct-fix op ---


def test_classify_shell_result():
    from buildpilot.sandbox.types import ExecResult

    def res(exit_code, timed_out=False):
        return ExecResult(command="x", exit_code=exit_code, stdout_excerpt="",
                          stderr_excerpt="", truncated=False, duration_ms=1,
                          timed_out=timed_out)

    assert classify_shell_result(res(0)) == "ok"
    assert classify_shell_result(res(124, timed_out=True)) == "timeout"
    assert classify_shell_result(res(2)) == "build_error"
    assert classify_shell_result(res(2), probe=True) == "noise"
    assert classify_shell_result(res(0), probe=True) == "ok"


def make_fix_gateway(replies):
    provider = TaggedProvider(by_tag={"MasterAgent": list(replies)},
                              default="garbled")
    ledger = UsageLedger()
    gateway = Gateway(make_registry(), ledger, lambda p: provider,
                      sleep=lambda _s: None)
    return gateway, provider


def make_fix_context():
    return ErrorContext(command="make", exit_code=2,
                        stderr_excerpt="Makefile:3: missing separator",
                        stdout_excerpt="", os_fingerprint="ubuntu:22.04")


def test_self_fix_parses_fenced_reply():
    gateway, provider = make_fix_gateway(
        ["```bash\nsed -i 's/^    /\\t/' Makefile\n```"])
    commands = self_fix(make_fix_context(), 0, gateway, "test-model")
    assert commands == ["sed -i 's/^    /\\t/' Makefile"]
    assert len(provider.calls) == 1


def test_self_fix_reprompts_once_then_gives_up():
    gateway, provider = make_fix_gateway(["word salad", "more salad"])
    assert self_fix(make_fix_context(), 0, gateway, "test-model") == []
    assert len(provider.calls) == 2


def test_self_fix_reprompt_can_recover():
    gateway, provider = make_fix_gateway(
        ["word salad", "```bash\nmake clean\n```"])
    commands = self_fix(make_fix_context(), 0, gateway, "test-model")
    assert commands == ["make clean"]
    assert len(provider.calls) == 2


def test_self_fix_decline_is_immediate():
    gateway, provider = make_fix_gateway(["NONE"])
    assert self_fix(make_fix_context(), 0, gateway, "test-model") == []
    assert len(provider.calls) == 1


def test_self_fix_rejects_out_of_range_attempt():
    gateway, _ = make_fix_gateway([])
    with pytest.raises(ValueError):
        self_fix(make_fix_context(), 2, gateway, "test-model", max_attempts=2)
