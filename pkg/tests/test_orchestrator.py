"""Session state machine, budgets, tool dispatch, acquisition, verification."""

import subprocess
from decimal import Decimal

import pytest

from buildpilot.config import BudgetLimits
from buildpilot.errors import NoCandidate, SearchUnavailable
from buildpilot.gateway.ledger import UsageLedger
from buildpilot.gateway.service import Gateway
from buildpilot.orchestrator.acquire import AcquisitionError, acquire_repo
from buildpilot.orchestrator.budget import BudgetExceeded, BudgetTracker
from buildpilot.orchestrator.dispatch import ToolDispatcher, command_is_dangerous
from buildpilot.orchestrator.session import (
    CompilationSession,
    IllegalTransition,
    SessionOutcome,
    TranscriptCanonicalizer,
    content_digest,
)
from buildpilot.bench.verify import verify_targets
from buildpilot.project import ProjectSpec, Target

from conftest import make_registry
from fakes import FakeSession, TaggedProvider, fail, ok


def make_gateway(provider=None, ledger=None):
    provider = provider or TaggedProvider()
    if ledger is None:
        ledger = UsageLedger()
    return Gateway(make_registry(), ledger, lambda profile: provider,
                   sleep=lambda _s: None)


def make_run(**kwargs):
    defaults = dict(project_name="demo", strategy="flow", model_id="test-model")
    defaults.update(kwargs)
    return CompilationSession(**defaults)


# --- session state machine ---


def test_legal_phase_walk():
    run = make_run()
    for phase in ("RepoAcquired", "StructureMapped", "CandidatesFound",
                  "InstructionsExtracted", "Compiling", "SelfFixing",
                  "Compiling", "ErrorSolving", "Compiling", "Succeeded"):
        run.advance(phase)
    assert run.succeeded
    assert run.terminal
    assert [t.to_phase for t in run.transitions][-1] == "Succeeded"


def test_illegal_transition_rejected():
    run = make_run()
    with pytest.raises(IllegalTransition):
        run.advance("Compiling")
    run.advance("RepoAcquired")
    with pytest.raises(IllegalTransition):
        run.advance("Succeeded")


def test_terminal_phase_is_final():
    run = make_run()
    run.fail("SandboxError")
    assert run.terminal and not run.succeeded
    with pytest.raises(IllegalTransition):
        run.advance("RepoAcquired")


def test_unknown_phase_and_reason_rejected():
    run = make_run()
    with pytest.raises(IllegalTransition):
        run.advance("Linking")
    with pytest.raises(ValueError):
        run.fail("MeteorStrike")


def test_outcome_validation():
    good = SessionOutcome(status="success", failure_reason="",
                          elapsed_seconds=1.5, cost_usd=Decimal("0.01"),
                          commands_run=3, error_solver_rounds_used=0)
    assert good.status == "success"
    with pytest.raises(ValueError):
        SessionOutcome(status="success", failure_reason="CompileFailed",
                       elapsed_seconds=1.0, cost_usd=Decimal(0),
                       commands_run=0, error_solver_rounds_used=0)
    with pytest.raises(ValueError):
        SessionOutcome(status="failure", failure_reason="MeteorStrike",
                       elapsed_seconds=1.0, cost_usd=Decimal(0),
                       commands_run=0, error_solver_rounds_used=0)
    with pytest.raises(ValueError):
        SessionOutcome(status="failure", failure_reason="CompileFailed",
                       elapsed_seconds=-2.0, cost_usd=Decimal(0),
                       commands_run=0, error_solver_rounds_used=0)


def test_outcome_json_round_trip():
    outcome = SessionOutcome(status="failure", failure_reason="BudgetExhausted",
                             elapsed_seconds=12.25, cost_usd=Decimal("1.2345"),
                             commands_run=60, error_solver_rounds_used=3)
    again = SessionOutcome.from_json(outcome.to_json())
    assert again == outcome
    assert isinstance(again.cost_usd, Decimal)


def test_transcript_digest_ignores_timing():
    ticks_a = iter([i * 1.0 for i in range(100)])
    ticks_b = iter([i * 7.3 for i in range(100)])
    runs = []
    for ticks in (ticks_a, ticks_b):
        run = make_run(clock=lambda t=ticks: next(t))
        run.advance("RepoAcquired")
        run.record_tool("shell", "make", {"exit": 0}, duration_ms=5)
        run.advance("Compiling")
        run.advance("Succeeded")
        runs.append(run)
    assert runs[0].transcript_digest() == runs[1].transcript_digest()


def test_transcript_digest_sees_tool_content():
    run_a, run_b = make_run(), make_run()
    for run, cmd in ((run_a, "make"), (run_b, "make -j4")):
        run.advance("RepoAcquired")
        run.record_tool("shell", cmd, {"exit": 0})
    assert run_a.transcript_digest() != run_b.transcript_digest()


def test_canonicalizer_rewrites_paths():
    canon = TranscriptCanonicalizer(workdir="/tmp/run7/src/demo",
                                    scratch="/tmp/scratch-abc")
    digest_one = content_digest("gcc -I/tmp/run7/src/demo/include", canon)
    other = TranscriptCanonicalizer(workdir="/var/other/demo",
                                    scratch="/tmp/scratch-xyz")
    digest_two = content_digest("gcc -I/var/other/demo/include", other)
    assert digest_one == digest_two


def test_transcript_file_round_trip(tmp_path):
    import json

    run = make_run()
    run.advance("RepoAcquired")
    run.record_tool("shell", "make", {"exit": 0})
    run.advance("Compiling")
    run.advance("Succeeded")
    path = run.write_transcript(tmp_path / "session.jsonl")
    lines = [json.loads(line) for line in path.read_text().splitlines()]
    kinds = [line["kind"] for line in lines]
    assert kinds[0] == "run" and kinds[-1] == "end"
    assert lines[0]["format_version"] == 1
    assert kinds.count("phase") == 3 and kinds.count("tool") == 1
    assert lines[-1]["transcript_digest"] == run.transcript_digest()


# --- budgets ---


def test_shell_budget_enforced():
    tracker = BudgetTracker(BudgetLimits(max_shell_commands=2))
    tracker.charge_shell_command()
    tracker.charge_shell_command()
    with pytest.raises(BudgetExceeded) as excinfo:
        tracker.charge_shell_command()
    assert excinfo.value.resource == "shell_commands"
    assert tracker.remaining_shell_commands() == 0


def test_solver_budget_enforced():
    tracker = BudgetTracker(BudgetLimits(max_error_solver_activations=1))
    assert tracker.solver_available
    tracker.charge_error_solver()
    assert not tracker.solver_available
    with pytest.raises(BudgetExceeded):
        tracker.charge_error_solver()


def test_wall_clock_budget():
    ticks = iter([0.0, 10.0, 4000.0])
    tracker = BudgetTracker(BudgetLimits(wall_clock_seconds=3600),
                            clock=lambda: next(ticks))
    tracker.check_wall_clock()
    with pytest.raises(BudgetExceeded) as excinfo:
        tracker.check_wall_clock()
    assert excinfo.value.resource == "wall_clock_seconds"


def test_token_budget_reads_ledger():
    ledger = UsageLedger()
    gateway = make_gateway(ledger=ledger)
    tracker = BudgetTracker(BudgetLimits(token_budget=25), ledger=ledger)
    tracker.check_tokens()
    from conftest import make_request

    gateway.complete(make_request())
    tracker.check_tokens()
    gateway.complete(make_request())
    with pytest.raises(BudgetExceeded) as excinfo:
        tracker.check_tokens()
    assert excinfo.value.resource == "tokens"


# --- dispatch and ablation ---


REPO_FILES = {
    "README.md": "Run `make` to build.\n",
    "Makefile": "all:\n\tgcc -o hello main.c\n",
    "main.c": "int main(void) { return 0; }\n",
}


def make_dispatcher(session=None, provider=None, disabled=(), **kwargs):
    session = session or FakeSession(files=dict(REPO_FILES))
    run = make_run()
    budget = BudgetTracker(BudgetLimits())
    gateway = make_gateway(provider)
    dispatcher = ToolDispatcher(session, gateway, "test-model", run, budget,
                                disabled_tools=frozenset(disabled), **kwargs)
    return dispatcher, run, session


def test_shell_records_invocation_and_charges():
    dispatcher, run, session = make_dispatcher()
    result = dispatcher.run_shell("make")
    assert result.ok
    assert session.commands == ["make"]
    assert dispatcher.budget.shell_commands == 1
    assert [inv.tool_id for inv in run.invocations] == ["shell"]


def test_disabled_file_navigator_uses_heuristic_without_record():
    dispatcher, run, _ = make_dispatcher(disabled=["file-navigator"])
    structure = dispatcher.fetch_structure()
    candidates = dispatcher.locate_candidates(structure)
    assert candidates[0].path == "README.md"
    assert candidates[0].source == "heuristic"
    assert run.invocations == []


def test_disabled_file_navigator_no_guides_raises():
    session = FakeSession(files={"main.c": "int main;"})
    dispatcher, _, _ = make_dispatcher(session=session, disabled=["file_navigator"])
    with pytest.raises(NoCandidate):
        dispatcher.locate_candidates(dispatcher.fetch_structure())


def test_enabled_file_navigator_records_invocation():
    provider = TaggedProvider(by_tag={
        "SearchAgent-I": ["1. README.md"],
        "SearchAgent-II": ["1. README.md"],
    })
    dispatcher, run, _ = make_dispatcher(provider=provider)
    candidates = dispatcher.locate_candidates(dispatcher.fetch_structure())
    assert candidates[0].path == "README.md"
    assert [inv.tool_id for inv in run.invocations] == ["file_navigator"]


def test_disabled_extractor_still_records_but_stops_following(monkeypatch):
    provider = TaggedProvider(by_tag={
        "SummarizeAgent": ["```bash\nmake\n```"],
    })
    followed = []

    def fake_fetcher(url, **kwargs):
        followed.append(url)
        return "irrelevant"

    session = FakeSession(files={
        "README.md": "See https://example.org/build for build docs.\n",
    })
    dispatcher, run, _ = make_dispatcher(
        session=session, provider=provider,
        disabled=["instruction_extractor"], fetcher=fake_fetcher)
    from buildpilot.navigator.locate import CandidateFile

    plan = dispatcher.extract_plan(CandidateFile("README.md", 1, "heuristic"))
    assert plan.steps == ("make",)
    assert plan.followed_urls == ()
    assert followed == []
    assert [inv.tool_id for inv in run.invocations] == ["instruction_extractor"]


def test_disabled_search_raises_without_record():
    dispatcher, run, _ = make_dispatcher(disabled=["website_search"])
    with pytest.raises(SearchUnavailable):
        dispatcher.web_search("undefined reference to zlibVersion")
    assert run.invocations == []


def test_disabled_discussion_returns_none_without_record():
    from buildpilot.solver.classify import ErrorContext

    dispatcher, run, _ = make_dispatcher(disabled=["multi-agent-discussion"])
    err = ErrorContext(command="make", exit_code=2, stderr_excerpt="boom",
                       stdout_excerpt="", os_fingerprint="test")
    assert dispatcher.discuss_error(err) is None
    assert run.invocations == []


def test_enabled_discussion_records_invocation():
    from buildpilot.solver.classify import ErrorContext

    fix = "```bash\nsudo apt-get install -y zlib1g-dev\n```"
    provider = TaggedProvider(by_tag={
        "Solver-0": [fix], "Solver-1": [fix], "Solver-2": [fix],
        "SolverSynthesis": [fix],
    })
    dispatcher, run, _ = make_dispatcher(provider=provider)
    err = ErrorContext(command="make", exit_code=2,
                       stderr_excerpt="zlib.h: No such file or directory",
                       stdout_excerpt="", os_fingerprint="test")
    result = dispatcher.discuss_error(err)
    assert result.reached
    assert [inv.tool_id for inv in run.invocations] == ["multi_agent_discussion"]


def test_usage_by_tool_counts():
    dispatcher, run, _ = make_dispatcher()
    dispatcher.run_shell("make")
    dispatcher.run_shell("make install")
    usage = dispatcher.usage_by_tool()
    assert usage["shell"] == 2
    assert usage["website_search"] == 0


def test_dangerous_command_refused_but_charged():
    dispatcher, run, session = make_dispatcher()
    result = dispatcher.run_shell("rm -rf / --no-preserve-root")
    assert not result.ok
    assert "refused" in result.stderr_excerpt
    assert session.commands == []  # never reached the sandbox
    assert run.tool_count("shell") == 1  # still recorded and charged
    assert dispatcher.budget.shell_commands == 1


def test_dangerous_command_patterns():
    for cmd in ("rm -rf /", "sudo rm  -rf /", "dd if=/dev/zero of=/dev/sda",
                "mkfs.ext4 /dev/sdb1", ":(){ :|: & };:", "shutdown -h now",
                "echo x > /dev/sda"):
        assert command_is_dangerous(cmd), cmd
    for cmd in ("rm -rf build", "make clean", "rm -rf ./dist",
                "dd if=in.img of=out.img", "echo done"):
        assert not command_is_dangerous(cmd), cmd


def test_tool_invocations_attribute_tokens_and_cost():
    provider = TaggedProvider(by_tag={
        "SearchAgent-I": ["1. README.md"],
        "SearchAgent-II": ["1. README.md"],
    })
    dispatcher, run, _ = make_dispatcher(provider=provider)
    structure = dispatcher.fetch_structure()
    dispatcher.locate_candidates(structure)
    dispatcher.run_shell("make")
    nav = next(i for i in run.invocations if i.tool_id == "file_navigator")
    shell = next(i for i in run.invocations if i.tool_id == "shell")
    ledger = dispatcher.gateway.ledger
    assert nav.input_tokens + nav.output_tokens == ledger.total_tokens()
    assert nav.cost_usd == ledger.total_cost_usd()
    assert shell.input_tokens == 0 and shell.output_tokens == 0
    assert shell.cost_usd == Decimal(0)


# --- acquisition ---


def test_acquire_copies_local_repo(tmp_path):
    source = tmp_path / "source"
    (source / ".git").mkdir(parents=True)
    (source / ".git" / "HEAD").write_text("ref: refs/heads/main\n")
    (source / "Makefile").write_text("all:\n\ttrue\n")
    project = ProjectSpec(name="demo", repo_url=str(source))
    workdir = acquire_repo(project, tmp_path / "runs")
    assert (workdir / "Makefile").exists()
    assert not (workdir / ".git").exists()
    # Re-acquiring replaces the tree instead of merging into it.
    (workdir / "stale.txt").write_text("old")
    workdir = acquire_repo(project, tmp_path / "runs")
    assert not (workdir / "stale.txt").exists()


def test_acquire_missing_local_repo(tmp_path):
    project = ProjectSpec(name="demo", repo_url=str(tmp_path / "nope"))
    with pytest.raises(AcquisitionError):
        acquire_repo(project, tmp_path / "runs")


def _git(*args, cwd):
    subprocess.run(["git", "-c", "user.email=t@t", "-c", "user.name=t",
                    *args], cwd=cwd, check=True, capture_output=True)


def test_acquire_clones_and_pins_revision(tmp_path):
    origin = tmp_path / "origin.git"
    origin.mkdir()
    (origin / "VERSION").write_text("one\n")
    _git("init", "-q", cwd=origin)
    _git("add", "-A", cwd=origin)
    _git("commit", "-qm", "first", cwd=origin)
    first = subprocess.run(["git", "rev-parse", "HEAD"], cwd=origin,
                           capture_output=True, text=True).stdout.strip()
    (origin / "VERSION").write_text("two\n")
    _git("commit", "-aqm", "second", cwd=origin)

    pinned = ProjectSpec(name="demo", repo_url=str(origin), revision=first)
    workdir = acquire_repo(pinned, tmp_path / "runs")
    assert (workdir / "VERSION").read_text() == "one\n"

    sentinel = ProjectSpec(name="demo", repo_url=str(origin), revision="0" * 40)
    workdir = acquire_repo(sentinel, tmp_path / "runs2")
    assert (workdir / "VERSION").read_text() == "two\n"


def test_acquire_bad_revision(tmp_path):
    origin = tmp_path / "origin.git"
    origin.mkdir()
    (origin / "VERSION").write_text("one\n")
    _git("init", "-q", cwd=origin)
    _git("add", "-A", cwd=origin)
    _git("commit", "-qm", "first", cwd=origin)
    project = ProjectSpec(name="demo", repo_url=str(origin), revision="f" * 40)
    with pytest.raises(AcquisitionError):
        acquire_repo(project, tmp_path / "runs")


# --- target verification ---


ELF = b"\x7fELF" + bytes(12)


def test_verify_mixed_targets():
    session = FakeSession(files={
        "hello": ELF,
        "libdemo.a": b"!<arch>\n" + bytes(8),
        "libdemo.so.1": ELF,
        "obj/main.o": ELF,
    })
    expected = (
        Target("hello", "executable"),
        Target("libdemo.a", "static_lib"),
        Target("libdemo.so.1", "shared_lib"),
        Target("obj/main.o", "object"),
    )
    ok_all, reports = verify_targets(session, expected)
    assert ok_all
    assert all(r.verified for r in reports)


def test_verify_missing_and_wrong_kind():
    session = FakeSession(files={"hello.txt": "not a binary"})
    ok_all, reports = verify_targets(session, (
        Target("hello", "executable"),
        Target("hello.txt", "executable"),
    ))
    assert not ok_all
    by_path = {r.target.path: r for r in reports}
    assert not by_path["hello"].exists
    assert by_path["hello.txt"].exists and not by_path["hello.txt"].verified


def test_verify_script_counts_as_executable():
    session = FakeSession(files={"run.sh": "#!/bin/sh\necho hi\n"})
    ok_all, _ = verify_targets(session, (Target("run.sh", "executable"),))
    assert ok_all


def test_verify_empty_expectation_never_passes():
    session = FakeSession(files={"hello": ELF})
    ok_all, reports = verify_targets(session, ())
    assert not ok_all and reports == []


def test_verify_empty_file_fails():
    session = FakeSession(files={"hello": b""})
    ok_all, reports = verify_targets(session, (Target("hello", "executable"),))
    assert not ok_all
    assert reports[0].detail == "empty file"
