"""Manifest loading, benchmark cell execution, aggregation, and rendering."""

import json
import random
import time
from decimal import Decimal

import pytest

from buildpilot.bench.manifest import (
    check_ratio,
    load_manifest,
    manifest_digest,
    save_manifest,
)
from buildpilot.bench.report import (
    BenchReport,
    ReportRow,
    aggregate,
    render_report,
    report_from_json,
)
from buildpilot.bench.runner import (
    RunRecord,
    config_digest,
    make_cell_id,
    resolve_archive_dir,
    run_benchmark,
)
from buildpilot.config import BudgetLimits, RunConfig
from buildpilot.errors import (
    ConfigError,
    MixedManifest,
    ParseError,
    RatioViolation,
    SchemaViolation,
    UnknownStrategy,
)
from buildpilot.gateway.ledger import UsageLedger
from buildpilot.gateway.service import Gateway
from buildpilot.orchestrator.session import SessionOutcome
from buildpilot.project import TOPICS, ProjectSpec, Target

from conftest import make_registry
from fakes import FakeRuntime, TaggedProvider, ok
from test_flow import ELF, NAVIGATION, REPO_FILES, build_on_make

REV = "a" * 40


def make_record(name="demo", category="in_repo", topic="Audio", **extra):
    record = {
        "schema_version": 1,
        "name": name,
        "repo_url": f"https://example.org/{name}.git",
        "revision": REV,
        "topic": topic,
        "guide_category": category,
        "expected_targets": [{"path": "out/app", "kind": "executable"}],
    }
    record.update(extra)
    return record


def write_manifest(tmp_path, records, filename="manifest.jsonl"):
    path = tmp_path / filename
    path.write_text(
        "\n".join(json.dumps(r) if isinstance(r, dict) else r for r in records)
        + "\n")
    return path


def ratio_records(n_in, n_not, n_no):
    records = []
    split = [("in_repo", n_in), ("not_in_repo", n_not), ("no_guide", n_no)]
    i = 0
    for category, count in split:
        for _ in range(count):
            records.append(make_record(name=f"proj-{i:03d}", category=category,
                                       topic=TOPICS[i % len(TOPICS)]))
            i += 1
    return records


# --- manifest loading --------------------------------------------------------


def test_load_manifest_happy_path(tmp_path):
    path = write_manifest(tmp_path, [
        make_record(name="zstd", topic="Compression",
                    timeout_override=900),
        make_record(name="redis", topic="Database", category="not_in_repo"),
    ])
    projects = load_manifest(path)
    assert [p.name for p in projects] == ["zstd", "redis"]
    assert projects[0].timeout_override == 900.0
    assert projects[0].expected_targets == (Target("out/app", "executable"),)
    assert projects[1].guide_category == "not_in_repo"


def test_save_then_load_round_trips(tmp_path):
    projects = [
        ProjectSpec(name="a", repo_url="https://x/a.git", revision=REV,
                    topic="Audio", guide_category="in_repo",
                    expected_targets=(Target("a.out", "executable"),)),
        ProjectSpec(name="b", repo_url="https://x/b.git", revision=REV,
                    topic="Crypto", guide_category="no_guide",
                    expected_targets=(Target("libb.a", "static_lib"),),
                    timeout_override=120.0),
    ]
    path = save_manifest(tmp_path / "m.jsonl", projects)
    assert load_manifest(path) == projects


def test_strict_ratio_accepts_seven_two_one(tmp_path):
    path = write_manifest(tmp_path, ratio_records(7, 2, 1))
    assert len(load_manifest(path, strict_ratio=True)) == 10


def test_strict_ratio_rejects_skew(tmp_path):
    path = write_manifest(tmp_path, ratio_records(6, 3, 1))
    with pytest.raises(RatioViolation) as err:
        load_manifest(path, strict_ratio=True)
    assert "6/3/1" in str(err.value)


def test_lenient_load_skips_ratio_check(tmp_path):
    path = write_manifest(tmp_path, ratio_records(6, 3, 1))
    assert len(load_manifest(path)) == 10


def test_strict_ratio_requires_all_topics_once_large_enough(tmp_path):
    # 20 projects split 14/4/2 but all on one topic
    records = ratio_records(14, 4, 2)
    for record in records:
        record["topic"] = "Audio"
    with pytest.raises(RatioViolation) as err:
        load_manifest(write_manifest(tmp_path, records), strict_ratio=True)
    assert "topics" in str(err.value)

    # too small to hold every topic: the check does not apply
    small = ratio_records(7, 2, 1)
    for record in small:
        record["topic"] = "Audio"
    path = write_manifest(tmp_path, small, filename="small.jsonl")
    assert len(load_manifest(path, strict_ratio=True)) == 10


def test_strict_ratio_all_topics_present_passes():
    projects = []
    for i, record in enumerate(ratio_records(14, 4, 2)):
        record["topic"] = TOPICS[i % len(TOPICS)]
        projects.append(ProjectSpec(
            name=record["name"], repo_url=record["repo_url"],
            revision=REV, topic=record["topic"],
            guide_category=record["guide_category"],
            expected_targets=(Target("out/app", "executable"),)))
    check_ratio(projects)


def test_duplicate_name_rejected(tmp_path):
    path = write_manifest(tmp_path, [make_record(name="dup"),
                                     make_record(name="dup")])
    with pytest.raises(SchemaViolation) as err:
        load_manifest(path)
    assert "dup" in str(err.value)


def test_invalid_json_line_names_the_line(tmp_path):
    path = write_manifest(tmp_path, [make_record(), "{not json"])
    with pytest.raises(ParseError) as err:
        load_manifest(path)
    assert ":2" in str(err.value)


@pytest.mark.parametrize("mutation, field", [
    ({"revision": "abc123"}, "revision"),
    ({"topic": "Gardening"}, "topic"),
    ({"guide_category": "maybe"}, "guide_category"),
    ({"expected_targets": []}, "expected_targets"),
    ({"expected_targets": [{"path": "../etc/passwd", "kind": "executable"}]},
     "expected_targets"),
    ({"expected_targets": [{"path": "a.out", "kind": "symlink"}]},
     "expected_targets"),
    ({"timeout_override": -5}, "timeout_override"),
    ({"timeout_override": True}, "timeout_override"),
    ({"name": ""}, "name"),
    ({"schema_version": 9}, "schema_version"),
])
def test_schema_violations_name_the_field(tmp_path, mutation, field):
    path = write_manifest(tmp_path, [make_record(**mutation)])
    with pytest.raises(SchemaViolation) as err:
        load_manifest(path)
    assert field in str(err.value)


def test_missing_field_rejected(tmp_path):
    record = make_record()
    del record["repo_url"]
    with pytest.raises(SchemaViolation) as err:
        load_manifest(write_manifest(tmp_path, [record]))
    assert "repo_url" in str(err.value)


def test_empty_manifest_rejected(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("\n")
    with pytest.raises(SchemaViolation):
        load_manifest(path)


def test_missing_file_is_a_parse_error(tmp_path):
    with pytest.raises(ParseError):
        load_manifest(tmp_path / "nope.jsonl")


def test_manifest_digest_ignores_order_but_not_pins():
    def spec(name, revision):
        return ProjectSpec(name=name, repo_url="https://x/r.git",
                           revision=revision, topic="Audio",
                           guide_category="in_repo",
                           expected_targets=(Target("a.out", "executable"),))

    a, b = spec("a", "1" * 40), spec("b", "2" * 40)
    assert manifest_digest([a, b]) == manifest_digest([b, a])
    assert manifest_digest([a, b]) != manifest_digest([a, spec("b", "3" * 40)])


# --- aggregation -------------------------------------------------------------


def bench_record(project, method="flow", model_id="replay", verified=True,
                 elapsed=300.0, cost="0.25", per_tool=None,
                 manifest="m1") -> RunRecord:
    outcome = SessionOutcome(
        status="success" if verified else "failure",
        failure_reason="" if verified else "CompileFailed",
        elapsed_seconds=elapsed, cost_usd=Decimal(cost),
        commands_run=5, error_solver_rounds_used=0)
    return RunRecord(project=project, method=method, model_id=model_id,
                     outcome=outcome, verified=verified,
                     timestamp="2026-01-01T00:00:00+00:00",
                     cell_id=make_cell_id(project, method, model_id),
                     per_tool=dict(per_tool or {}), manifest_digest=manifest)


def test_aggregate_matches_published_precision():
    # 89 of 100 verified, elapsed summing 30168 s, spend summing $25.44
    records = [
        bench_record(f"p{i:03d}", verified=i < 89, elapsed=301.68,
                     cost="0.2544")
        for i in range(100)
    ]
    report = aggregate(records)
    assert report.n_projects == 100
    row = report.rows[0]
    assert row.csr == pytest.approx(0.89)
    assert row.total_time_hours == pytest.approx(8.38)
    assert row.total_exp_usd == Decimal("25.4400")
    text = render_report(report, "text")
    assert "89%" in text
    assert "8.38" in text
    assert "25.44" in text


def test_aggregate_zero_verified():
    report = aggregate([bench_record(f"p{i}", verified=False) for i in range(4)])
    assert report.rows[0].csr == 0.0
    assert "0%" in render_report(report, "text")


def test_aggregate_is_order_invariant():
    records = [bench_record(f"p{i}", verified=i % 3 == 0,
                            per_tool={"shell": i}) for i in range(9)]
    shuffled = records[:]
    random.Random(7).shuffle(shuffled)
    assert aggregate(records) == aggregate(shuffled)


def test_aggregate_groups_by_method_and_model():
    records = []
    for project in ("a", "b"):
        records.append(bench_record(project, method="flow", verified=True))
        records.append(bench_record(project, method="rag", verified=False))
    report = aggregate(records)
    assert [(r.method, r.model_id) for r in report.rows] == [
        ("flow", "replay"), ("rag", "replay")]
    assert report.rows[0].csr == 1.0
    assert report.rows[1].csr == 0.0
    assert report.n_projects == 2


def test_aggregate_tool_means_use_project_count():
    records = [
        bench_record("a", per_tool={"shell": 12, "web_search": 1}),
        bench_record("b", per_tool={"shell": 8}),
    ]
    report = aggregate(records)
    assert report.rows[0].per_tool_usage == {"shell": 10.0, "web_search": 0.5}


def test_aggregate_rejects_mixed_manifests():
    with pytest.raises(MixedManifest):
        aggregate([bench_record("a", manifest="m1"),
                   bench_record("b", manifest="m2")])


def test_aggregate_rejects_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_report_row_validates_rate():
    with pytest.raises(ValueError):
        ReportRow(method="flow", model_id="replay", csr=1.2,
                  total_time_hours=0.0, total_exp_usd=Decimal(0))


# --- rendering ---------------------------------------------------------------


def sample_report():
    return BenchReport(rows=(
        ReportRow(method="flow", model_id="gpt-x", csr=0.89,
                  total_time_hours=8.376, total_exp_usd=Decimal("25.44"),
                  per_tool_usage={"shell": 12.4, "web_search": 1.25}),
        ReportRow(method="rag", model_id="gpt-x", csr=0.5,
                  total_time_hours=1.0, total_exp_usd=Decimal("3.10"),
                  per_tool_usage={"shell": 3.0}),
    ), n_projects=100)


def test_text_render_formats_cells():
    text = render_report(sample_report(), "text")
    assert "Projects: 100" in text
    assert "89%" in text
    assert "8.38" in text  # 8.376 rounds to two decimals
    assert "25.44" in text
    assert "shell" in text and "web_search" in text
    # rag row has no web_search usage: rendered as a dash, not zero
    rag_line = next(line for line in text.splitlines() if "rag" in line)
    assert rag_line.rstrip().endswith("-")


def test_markdown_render_is_a_table():
    text = render_report(sample_report(), "markdown")
    lines = text.splitlines()
    assert lines[2].startswith("| Model | Method | Csr | Time (h) | Exp ($) |")
    assert lines[3].startswith("| --- |")
    assert "| 89% |" in text


def test_empty_tool_usage_omits_tool_columns():
    report = BenchReport(rows=(
        ReportRow(method="ossfuzzgen", model_id="replay", csr=0.25,
                  total_time_hours=0.2, total_exp_usd=Decimal(0)),
    ), n_projects=4)
    text = render_report(report, "text")
    header = text.splitlines()[1]
    assert header.split() == ["Model", "Method", "Csr", "Time", "(h)", "Exp", "($)"]
    markdown = render_report(report, "markdown")
    assert "| Model | Method | Csr | Time (h) | Exp ($) |" in markdown


def test_json_render_round_trips_exactly():
    report = sample_report()
    parsed = report_from_json(render_report(report, "json"))
    assert parsed == report


def test_json_render_is_schema_stable():
    doc = json.loads(render_report(sample_report(), "json"))
    assert doc["schema_version"] == 1
    assert doc["n_projects"] == 100
    assert doc["rows"][0]["total_exp_usd"] == "25.44"


def test_unknown_format_rejected():
    with pytest.raises(ValueError):
        render_report(sample_report(), "pdf")


# --- cell execution ----------------------------------------------------------


def bench_projects(tmp_path, names=("demo-a", "demo-b", "demo-c")):
    projects = []
    for name in names:
        source = tmp_path / f"{name}-src"
        source.mkdir(parents=True, exist_ok=True)
        for rel, content in REPO_FILES.items():
            (source / rel).write_text(content)
        projects.append(ProjectSpec(
            name=name, repo_url=str(source),
            expected_targets=(Target("hello", "executable"),)))
    return projects


def scripted_factory(calls=None):
    def factory(project, method, model_id):
        if calls is not None:
            calls.append((project.name, method, model_id))
        provider = TaggedProvider(by_tag={k: list(v) for k, v in NAVIGATION.items()})
        return Gateway(make_registry(), UsageLedger(), lambda p: provider,
                       sleep=lambda _s: None)
    return factory


def bench_config(tmp_path, **overrides):
    return RunConfig(model_id="test-model", run_dir=tmp_path / "bench",
                     **overrides)


def test_run_benchmark_executes_every_cell(tmp_path):
    projects = bench_projects(tmp_path)
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=build_on_make)
    config = bench_config(tmp_path)
    records = run_benchmark(projects, ["flow", "ossfuzzgen"], ["test-model"],
                            config, runtime=runtime,
                            gateway_factory=scripted_factory())
    assert [(r.project, r.method) for r in records] == [
        ("demo-a", "flow"), ("demo-a", "ossfuzzgen"),
        ("demo-b", "flow"), ("demo-b", "ossfuzzgen"),
        ("demo-c", "flow"), ("demo-c", "ossfuzzgen")]
    assert all(r.verified for r in records)
    assert all(r.outcome.status == "success" for r in records)
    assert len({r.manifest_digest for r in records}) == 1
    assert len({r.config_digest for r in records}) == 1
    for record in records:
        cell_dir = config.run_dir / record.cell_id
        assert (cell_dir / "record.json").exists()
        assert (cell_dir / "session.jsonl").exists()
        assert record.timestamp
        assert record.transcript_digest
    flow_tools = records[0].per_tool
    assert flow_tools == {"file_navigator": 1, "instruction_extractor": 1,
                          "shell": 1}
    assert records[1].per_tool == {"shell": 1}
    assert runtime.list_sessions() == []


def test_resume_skips_recorded_cells(tmp_path):
    projects = bench_projects(tmp_path)
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=build_on_make)
    config = bench_config(tmp_path)
    first = run_benchmark(projects, ["flow"], ["test-model"], config,
                          runtime=runtime, gateway_factory=scripted_factory())

    calls = []
    second = run_benchmark(projects, ["flow"], ["test-model"], config,
                           runtime=runtime,
                           gateway_factory=scripted_factory(calls))
    assert calls == []
    assert [r.timestamp for r in second] == [r.timestamp for r in first]
    assert [r.transcript_digest for r in second] == [
        r.transcript_digest for r in first]


def test_resume_reruns_only_missing_cells(tmp_path):
    projects = bench_projects(tmp_path)
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=build_on_make)
    config = bench_config(tmp_path)
    run_benchmark(projects, ["flow"], ["test-model"], config,
                  runtime=runtime, gateway_factory=scripted_factory())

    victim = make_cell_id("demo-b", "flow", "test-model")
    (config.run_dir / victim / "record.json").unlink()
    calls = []
    records = run_benchmark(projects, ["flow"], ["test-model"], config,
                            runtime=runtime,
                            gateway_factory=scripted_factory(calls))
    assert calls == [("demo-b", "flow", "test-model")]
    assert len(records) == 3 and all(r.verified for r in records)


def test_config_change_invalidates_resume(tmp_path):
    projects = bench_projects(tmp_path, names=("demo-a",))
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=build_on_make)
    config = bench_config(tmp_path)
    run_benchmark(projects, ["flow"], ["test-model"], config,
                  runtime=runtime, gateway_factory=scripted_factory())

    calls = []
    tighter = bench_config(tmp_path,
                           budget=BudgetLimits(max_shell_commands=10))
    run_benchmark(projects, ["flow"], ["test-model"], tighter,
                  runtime=runtime, gateway_factory=scripted_factory(calls))
    assert calls == [("demo-a", "flow", "test-model")]


def test_parallelism_bounds_live_sessions(tmp_path):
    def slow_build(cmd, sess):
        if cmd == "make":
            time.sleep(0.05)
            sess.files["hello"] = ELF
            return ok("built")
        return ok()

    projects = bench_projects(tmp_path)
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=slow_build)
    config = bench_config(tmp_path)
    records = run_benchmark(projects, ["ossfuzzgen"], ["test-model"], config,
                            parallelism=2, runtime=runtime,
                            gateway_factory=scripted_factory())
    assert len(records) == 3 and all(r.verified for r in records)
    assert runtime.max_alive <= 2
    assert runtime.list_sessions() == []


def test_serial_run_never_overlaps_sessions(tmp_path):
    projects = bench_projects(tmp_path)
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=build_on_make)
    config = bench_config(tmp_path)
    run_benchmark(projects, ["ossfuzzgen"], ["test-model"], config,
                  parallelism=1, runtime=runtime,
                  gateway_factory=scripted_factory())
    assert runtime.max_alive == 1


def test_cell_failure_becomes_a_record(tmp_path):
    from buildpilot.errors import CorruptFixture

    projects = bench_projects(tmp_path, names=("demo-a", "demo-b"))
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=build_on_make)
    healthy = scripted_factory()

    def factory(project, method, model_id):
        if project.name == "demo-b":
            raise CorruptFixture("archive missing")
        return healthy(project, method, model_id)

    records = run_benchmark(projects, ["flow"], ["test-model"],
                            bench_config(tmp_path), runtime=runtime,
                            gateway_factory=factory)
    by_name = {r.project: r for r in records}
    assert by_name["demo-a"].verified
    assert not by_name["demo-b"].verified
    assert by_name["demo-b"].outcome.failure_reason == "SandboxError"


def test_unverified_build_is_recorded_as_failure(tmp_path):
    def no_artifacts(cmd, sess):
        return ok()

    projects = bench_projects(tmp_path, names=("demo-a",))
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=no_artifacts)
    records = run_benchmark(projects, ["ossfuzzgen"], ["test-model"],
                            bench_config(tmp_path), runtime=runtime,
                            gateway_factory=scripted_factory())
    assert not records[0].verified
    assert records[0].outcome.failure_reason == "CompileFailed"


def test_harness_level_errors_abort_before_cells(tmp_path):
    projects = bench_projects(tmp_path, names=("demo-a",))
    runtime = FakeRuntime(files=dict(REPO_FILES), handler=build_on_make)
    config = bench_config(tmp_path)
    calls = []
    factory = scripted_factory(calls)
    with pytest.raises(UnknownStrategy):
        run_benchmark(projects, ["mystery"], ["test-model"], config,
                      runtime=runtime, gateway_factory=factory)
    with pytest.raises(ConfigError):
        run_benchmark([], ["flow"], ["test-model"], config,
                      runtime=runtime, gateway_factory=factory)
    with pytest.raises(ConfigError):
        run_benchmark(projects, ["flow"], [], config,
                      runtime=runtime, gateway_factory=factory)
    with pytest.raises(ConfigError):
        run_benchmark(projects, ["flow"], ["test-model"], config,
                      parallelism=0, runtime=runtime, gateway_factory=factory)
    assert calls == []


# --- record and cell naming --------------------------------------------------


def test_run_record_round_trips():
    record = bench_record("demo", per_tool={"shell": 3},
                          manifest="m" * 16)
    assert RunRecord.from_json(record.to_json()) == record


def test_run_record_rejects_verified_failure():
    outcome = SessionOutcome(status="failure", failure_reason="CompileFailed",
                             elapsed_seconds=1.0, cost_usd=Decimal(0),
                             commands_run=1, error_solver_rounds_used=0)
    with pytest.raises(ValueError):
        RunRecord(project="p", method="flow", model_id="replay",
                  outcome=outcome, verified=True, timestamp="t")


def test_cell_ids_are_filesystem_safe():
    cell = make_cell_id("My Proj/x", "flow", "openai/gpt-4o")
    assert cell == "My-Proj-x--flow--openai-gpt-4o"
    assert "/" not in cell and " " not in cell


def test_archive_resolution_prefers_single_archives(tmp_path):
    shared = tmp_path / "single"
    shared.mkdir()
    (shared / "meta.json").write_text("{}")
    assert resolve_archive_dir(shared, "demo", "flow", "replay") == shared

    tree = tmp_path / "tree"
    tree.mkdir()
    assert resolve_archive_dir(tree, "demo", "flow", "replay") == (
        tree / "demo" / "flow--replay")


def test_config_digest_tracks_behavioural_fields(tmp_path):
    base = bench_config(tmp_path)
    same_outputs = bench_config(tmp_path, label="nightly")
    assert config_digest(base) == config_digest(same_outputs)
    tighter = bench_config(tmp_path, budget=BudgetLimits(max_shell_commands=5))
    assert config_digest(base) != config_digest(tighter)
    ablated = bench_config(tmp_path,
                           disabled_tools=frozenset({"multi_agent_discussion"}))
    assert config_digest(base) != config_digest(ablated)
