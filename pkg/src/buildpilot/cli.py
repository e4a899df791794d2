"""Operator entry point: compile one project, run benchmarks, manage fixtures.

Exit codes are the machine contract: 0 success, 1 compilation failure or
fixture digest mismatch, 2 configuration or usage errors. Human-readable
text goes to stderr; stdout carries only machine output (outcome JSON on a
successful compile, rendered reports).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from buildpilot.bench.manifest import load_manifest
from buildpilot.bench.report import REPORT_FORMATS, aggregate, render_report
from buildpilot.bench.runner import load_records, run_benchmark
from buildpilot.config import (
    DEFAULT_CONFIG_PATH,
    ENV_HTTP_PROXY,
    FIXTURE_MODES,
    BudgetLimits,
    DiscussionConfig,
    RunConfig,
    parse_config_file,
    registry_from_config,
    resolve_field,
)
from buildpilot.errors import (
    AuthFailure,
    ConfigError,
    CorruptFixture,
    FixtureMiss,
    ManifestError,
    UnknownModel,
    UnknownStrategy,
)
from buildpilot.gateway.factory import build_gateway
from buildpilot.orchestrator.flow import run_project
from buildpilot.project import TARGET_KINDS, ProjectSpec, Target
from buildpilot.sandbox.runtime import resolve_runtime

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

_USAGE_ERRORS = (ConfigError, ManifestError, UnknownStrategy, UnknownModel,
                 AuthFailure, FixtureMiss, CorruptFixture)


def apply_proxy(env) -> None:
    """BUILDPILOT_HTTP_PROXY stands in for both standard proxy variables."""
    proxy = env.get(ENV_HTTP_PROXY)
    if proxy:
        env["HTTP_PROXY"] = proxy
        env["HTTPS_PROXY"] = proxy


def parse_targets(raw_values) -> tuple[Target, ...]:
    """--targets items look like out/app:executable, comma-separable."""
    targets = []
    for raw in raw_values or []:
        for item in raw.split(","):
            item = item.strip()
            if not item:
                continue
            path, sep, kind = item.rpartition(":")
            if not sep or not path:
                raise ConfigError(
                    f"--targets entry {item!r} must look like path:kind "
                    f"(kinds: {', '.join(TARGET_KINDS)})")
            try:
                targets.append(Target(path=path, kind=kind))
            except ValueError as exc:
                raise ConfigError(f"--targets entry {item!r}: {exc}") from exc
    return tuple(targets)


def _split_csv(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def assemble_config(args, env):
    """RunConfig plus model registry, resolved flag > file > env > default."""
    config_path = Path(args.config) if args.config else DEFAULT_CONFIG_PATH
    if args.config and not config_path.exists():
        raise ConfigError(f"config file {config_path} does not exist")
    file_values = parse_config_file(config_path) if config_path.exists() else {}

    def pick(name, cli_value, default, cast=str):
        return resolve_field(name, cli_value, file_values, default, cast, env)

    base = RunConfig()
    fixture_mode = pick("fixture_mode", getattr(args, "fixture_mode", None),
                        base.fixture_mode)
    fixture_path = pick("fixture_path", getattr(args, "fixture_path", None),
                        None, Path)
    if getattr(args, "replay", None):
        fixture_mode, fixture_path = "replay", Path(args.replay)
    elif getattr(args, "record", None):
        fixture_mode, fixture_path = "record", Path(args.record)

    cli_disabled = frozenset(
        normalize_tool_id(t) for t in args.disable_tool) if getattr(
        args, "disable_tool", None) else None
    disabled = pick("disabled_tools", cli_disabled, frozenset(),
                    lambda raw: frozenset(
                        normalize_tool_id(t) for t in _split_csv(raw)))

    defaults = BudgetLimits()
    try:
        budget = BudgetLimits(
            max_shell_commands=pick("max_shell_commands",
                                    getattr(args, "max_shell_commands", None),
                                    defaults.max_shell_commands, int),
            max_self_fix_attempts=pick("max_self_fix_attempts", None,
                                       defaults.max_self_fix_attempts, int),
            max_error_solver_activations=pick(
                "max_error_solver_activations", None,
                defaults.max_error_solver_activations, int),
            wall_clock_seconds=pick("wall_clock_seconds",
                                    getattr(args, "wall_clock", None),
                                    defaults.wall_clock_seconds, float),
            token_budget=pick("token_budget", None, defaults.token_budget, int),
        )
        talk = DiscussionConfig()
        discussion = DiscussionConfig(
            agents=pick("discussion_agents", None, talk.agents, int),
            rounds=pick("discussion_rounds", None, talk.rounds, int),
            theta=pick("discussion_theta", None, talk.theta, float),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    config = RunConfig(
        model_id=pick("model", getattr(args, "model", None), base.model_id),
        strategy=pick("strategy", getattr(args, "strategy", None), base.strategy),
        image=pick("image", getattr(args, "image", None), base.image),
        runtime=pick("runtime", getattr(args, "runtime", None), base.runtime),
        network=pick("network", getattr(args, "network", None), base.network),
        run_dir=pick("run_dir", getattr(args, "run_dir", None),
                     base.run_dir, Path),
        label=pick("label", getattr(args, "label", None), base.label),
        hermetic=pick("hermetic", True if getattr(args, "hermetic", False)
                      else None, base.hermetic, bool),
        fixture_mode=fixture_mode,
        fixture_path=fixture_path,
        search_endpoint=pick("search_endpoint",
                             getattr(args, "search_endpoint", None),
                             base.search_endpoint),
        search_fixture=pick("search_fixture",
                            getattr(args, "search_fixture", None), None, Path),
        disabled_tools=disabled,
        budget=budget,
        discussion=discussion,
    )
    return config, registry_from_config(file_values)


def project_from_args(args) -> ProjectSpec:
    repo = args.repo
    name = Path(repo.rstrip("/")).name
    if name.endswith(".git"):
        name = name[: -len(".git")]
    if not name:
        raise ConfigError(f"cannot derive a project name from {repo!r}")
    return ProjectSpec(
        name=name,
        repo_url=repo,
        revision=getattr(args, "revision", "") or "",
        expected_targets=parse_targets(getattr(args, "targets", None)),
    )


def _search_backend(config, env):
    from buildpilot.bench.runner import default_search_backend

    return default_search_backend(config, env)


def _print_outcome(project_name: str, outcome) -> None:
    reason = f" ({outcome.failure_reason})" if outcome.failure_reason else ""
    print(
        f"{project_name}: {outcome.status}{reason} after "
        f"{outcome.elapsed_seconds:.1f}s, {outcome.commands_run} commands, "
        f"${outcome.cost_usd}, solver rounds {outcome.error_solver_rounds_used}",
        file=sys.stderr,
    )


def _run_single(project, config, env, registry):
    """Shared compile path: build gateway and runtime, run, clean up."""
    from buildpilot.orchestrator.strategies import resolve_strategy

    resolve_strategy(config.strategy)  # fail usage-style before any setup
    bundle = build_gateway(config, registry, archive_dir=config.fixture_path,
                           env=env)
    runtime = resolve_runtime(config.runtime, env)
    run = run_project(project, config, bundle.gateway, runtime,
                      search_backend=_search_backend(config, env))
    return run, bundle


def cmd_compile(args, env) -> int:
    config, registry = assemble_config(args, env)
    project = project_from_args(args)
    run, bundle = _run_single(project, config, env, registry)
    bundle.flush()
    _print_outcome(project.name, run.outcome)
    if run.succeeded:
        print(json.dumps(run.outcome.to_json(), sort_keys=True))
        return EXIT_OK
    return EXIT_FAILURE


def cmd_bench_run(args, env) -> int:
    config, registry = assemble_config(args, env)
    manifest = load_manifest(args.manifest, strict_ratio=args.strict)
    methods = _split_csv(args.methods)
    models = _split_csv(args.models) if args.models else [config.model_id]
    runtime = resolve_runtime(config.runtime, env)
    records = run_benchmark(manifest, methods, models, config,
                            parallelism=args.parallelism, registry=registry,
                            runtime=runtime,
                            search_backend=_search_backend(config, env))
    verified = sum(1 for r in records if r.verified)
    print(f"{len(records)} cells complete, {verified} verified; "
          f"records under {config.run_dir}", file=sys.stderr)
    return EXIT_OK


def cmd_bench_report(args, env) -> int:
    records = load_records(args.run_dir)
    report = aggregate(records)
    document = render_report(report, args.format)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
        print(f"report written to {args.out}", file=sys.stderr)
    else:
        print(document, end="")
    return EXIT_OK


def cmd_fixture_record(args, env) -> int:
    config, registry = assemble_config(args, env)
    config = replace(config, fixture_mode="record",
                     fixture_path=Path(args.fixture_path))
    project = project_from_args(args)
    run, bundle = _run_single(project, config, env, registry)
    bundle.writer.set_meta(
        project=project.name,
        strategy=config.strategy,
        model_id=config.model_id,
        transcript_digest=run.transcript_digest(),
    )
    bundle.flush()
    _print_outcome(project.name, run.outcome)
    print(f"archive written to {config.fixture_path}", file=sys.stderr)
    return EXIT_OK if run.succeeded else EXIT_FAILURE


def cmd_fixture_verify(args, env) -> int:
    config, registry = assemble_config(args, env)
    config = replace(config, fixture_mode="replay",
                     fixture_path=Path(args.fixture_path))
    meta_path = config.fixture_path / "meta.json"
    if not meta_path.exists():
        raise FixtureMiss(message=f"no replay archive at {config.fixture_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    expected = meta.get("transcript_digest", "")
    if not expected:
        raise ConfigError(
            f"{meta_path} records no transcript digest; re-record the fixture")

    project = project_from_args(args)
    run, _bundle = _run_single(project, config, env, registry)
    actual = run.transcript_digest()
    if actual == expected:
        print(f"{project.name}: replay digest matches the recording "
              f"({actual[:16]})", file=sys.stderr)
        return EXIT_OK
    print(f"{project.name}: replay diverged from the recording\n"
          f"  recorded {expected}\n  replayed {actual}", file=sys.stderr)
    return EXIT_FAILURE


def _add_run_flags(parser: argparse.ArgumentParser, fixtures: bool = True) -> None:
    parser.add_argument("--config", help="config file (default buildpilot.toml)")
    parser.add_argument("--model", help="model id from the registry")
    parser.add_argument("--run-dir", dest="run_dir", help="output directory")
    parser.add_argument("--image", help="container image for the sandbox")
    parser.add_argument("--runtime", help="docker, process, or auto")
    parser.add_argument("--network", help="sandbox network mode")
    parser.add_argument("--label", help="label applied to sandbox sessions")
    parser.add_argument("--hermetic", action="store_true",
                        help="forbid web access during the run")
    parser.add_argument("--disable-tool", action="append", metavar="TOOL",
                        help="ablate a tool (repeatable)")
    parser.add_argument("--search-fixture", dest="search_fixture",
                        help="canned web-search results (jsonl)")
    parser.add_argument("--search-endpoint", dest="search_endpoint",
                        help="web search API endpoint")
    parser.add_argument("--max-shell-commands", dest="max_shell_commands",
                        type=int, help="shell command budget")
    parser.add_argument("--wall-clock", dest="wall_clock", type=float,
                        help="wall clock budget in seconds")
    if fixtures:
        parser.add_argument("--replay", metavar="DIR",
                            help="replay recorded responses from DIR")
        parser.add_argument("--record", metavar="DIR",
                            help="record live responses into DIR")
        parser.add_argument("--fixture-mode", dest="fixture_mode",
                            choices=FIXTURE_MODES)
        parser.add_argument("--fixture-path", dest="fixture_path")


def _add_repo_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("repo", help="repository URL or local path")
    parser.add_argument("--strategy", help="compilation strategy")
    parser.add_argument("--revision", help="commit hash to check out")
    parser.add_argument("--targets", action="append", metavar="PATH:KIND",
                        help="expected build outputs (repeatable, "
                             "comma-separable)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="buildpilot",
        description="Agent-driven repository compilation and its benchmark.")
    parser.add_argument("--verbose", "-v", action="count", default=0,
                        help="-v for info, -vv for debug")
    commands = parser.add_subparsers(dest="command", required=True)

    compile_cmd = commands.add_parser("compile",
                                      help="compile one repository")
    _add_repo_flags(compile_cmd)
    _add_run_flags(compile_cmd)
    compile_cmd.set_defaults(handler=cmd_compile)

    bench = commands.add_parser("bench", help="benchmark over a manifest")
    bench_sub = bench.add_subparsers(dest="bench_command", required=True)

    bench_run = bench_sub.add_parser("run", help="execute benchmark cells")
    bench_run.add_argument("--manifest", required=True,
                           help="project manifest (jsonl)")
    bench_run.add_argument("--methods", default="flow",
                           help="comma-separated methods")
    bench_run.add_argument("--models", default="",
                           help="comma-separated model ids")
    bench_run.add_argument("--parallelism", type=int, default=1)
    bench_run.add_argument("--strict", action="store_true",
                           help="enforce the 7:2:1 manifest composition")
    _add_run_flags(bench_run)
    bench_run.set_defaults(handler=cmd_bench_run)

    bench_report = bench_sub.add_parser("report",
                                        help="aggregate and render records")
    bench_report.add_argument("--run-dir", dest="run_dir", required=True,
                              help="directory holding cell records")
    bench_report.add_argument("--format", choices=REPORT_FORMATS,
                              default="text")
    bench_report.add_argument("--out", help="write the report to a file")
    bench_report.set_defaults(handler=cmd_bench_report)

    fixture = commands.add_parser("fixture",
                                  help="record and verify replay archives")
    fixture_sub = fixture.add_subparsers(dest="fixture_command", required=True)

    record = fixture_sub.add_parser("record",
                                    help="run live and persist an archive")
    _add_repo_flags(record)
    record.add_argument("--fixture-path", dest="fixture_path", required=True,
                        help="archive output directory")
    _add_run_flags(record, fixtures=False)
    record.set_defaults(handler=cmd_fixture_record)

    verify = fixture_sub.add_parser("verify",
                                    help="replay an archive and check digests")
    _add_repo_flags(verify)
    verify.add_argument("--fixture-path", dest="fixture_path", required=True,
                        help="archive directory")
    _add_run_flags(verify, fixtures=False)
    verify.set_defaults(handler=cmd_fixture_verify)

    return parser


def main(argv=None, env=None) -> int:
    env = env if env is not None else os.environ
    apply_proxy(env)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    level = logging.WARNING
    if args.verbose == 1:
        level = logging.INFO
    elif args.verbose >= 2:
        level = logging.DEBUG
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        return args.handler(args, env)
    except _USAGE_ERRORS as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
