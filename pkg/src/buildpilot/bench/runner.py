"""Benchmark execution: one isolated session per (project, method, model) cell.

Cells run under a thread pool with a serialized record sink. Every finished
cell persists a record.json immediately, so an interrupted run resumes by
skipping cells whose record already matches the current config and manifest.
"""

from __future__ import annotations

import json
import logging
import os
import re
import time
from collections import Counter
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from decimal import Decimal
from pathlib import Path

from buildpilot.bench.manifest import manifest_digest
from buildpilot.config import ENV_SEARCH_KEY, RunConfig, replay_profile
from buildpilot.digests import canonical_json, sha256_hex
from buildpilot.errors import BuildPilotError, ConfigError, UnknownStrategy
from buildpilot.gateway.factory import GatewayBundle, build_gateway
from buildpilot.gateway.ledger import UsageLedger
from buildpilot.gateway.service import Gateway
from buildpilot.gateway.types import ModelRegistry
from buildpilot.orchestrator.flow import run_project
from buildpilot.orchestrator.session import SessionOutcome
from buildpilot.orchestrator.strategies import STRATEGIES
from buildpilot.project import ProjectSpec
from buildpilot.solver.search import ApiSearchBackend, FixtureSearchBackend

logger = logging.getLogger(__name__)

RECORD_SCHEMA_VERSION = 1
RECORD_FILE = "record.json"

_CELL_SAFE = re.compile(r"[^A-Za-z0-9._-]+")


@dataclass(frozen=True)
class RunRecord:
    """Persisted result of one benchmark cell."""

    project: str
    method: str
    model_id: str
    outcome: SessionOutcome
    verified: bool
    timestamp: str
    cell_id: str = ""
    per_tool: dict = field(default_factory=dict)
    transcript_digest: str = ""
    manifest_digest: str = ""
    config_digest: str = ""

    def __post_init__(self) -> None:
        if self.verified and self.outcome.status != "success":
            raise ValueError("a failed outcome cannot be marked verified")

    def to_json(self) -> dict:
        return {
            "schema_version": RECORD_SCHEMA_VERSION,
            "project": self.project,
            "method": self.method,
            "model_id": self.model_id,
            "cell_id": self.cell_id,
            "verified": self.verified,
            "timestamp": self.timestamp,
            "outcome": self.outcome.to_json(),
            "per_tool": dict(self.per_tool),
            "transcript_digest": self.transcript_digest,
            "manifest_digest": self.manifest_digest,
            "config_digest": self.config_digest,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RunRecord":
        if data.get("schema_version") != RECORD_SCHEMA_VERSION:
            raise ValueError(
                f"unsupported record schema {data.get('schema_version')!r}")
        return cls(
            project=data["project"],
            method=data["method"],
            model_id=data["model_id"],
            outcome=SessionOutcome.from_json(data["outcome"]),
            verified=bool(data["verified"]),
            timestamp=data.get("timestamp", ""),
            cell_id=data.get("cell_id", ""),
            per_tool={str(k): int(v) for k, v in (data.get("per_tool") or {}).items()},
            transcript_digest=data.get("transcript_digest", ""),
            manifest_digest=data.get("manifest_digest", ""),
            config_digest=data.get("config_digest", ""),
        )


def make_cell_id(project: str, method: str, model_id: str) -> str:
    raw = f"{project}--{method}--{model_id}"
    return _CELL_SAFE.sub("-", raw)


def resolve_archive_dir(base: Path | str, project: str, method: str,
                        model_id: str) -> Path:
    """Fixture layout: one shared archive, or a per-cell subdirectory tree.

    A meta.json directly under base marks a single self-contained archive;
    otherwise each cell reads base/<project>/<method>--<model>.
    """
    base = Path(base)
    if (base / "meta.json").exists():
        return base
    return base / project / f"{method}--{model_id}"


def _jsonable(value):
    if isinstance(value, Decimal):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, frozenset):
        return sorted(value)
    return value


def config_digest(config: RunConfig) -> str:
    """Identity of the run configuration for resume checks.

    Cell-varying fields (strategy, method, model) live in the cell id, and
    run_dir/label name where results land rather than what ran, so none of
    them participate.
    """
    budget = config.budget
    discussion = config.discussion
    doc = {
        "image": config.image,
        "runtime": config.runtime,
        "network": config.network,
        "hermetic": config.hermetic,
        "fixture_mode": config.fixture_mode,
        "fixture_path": _jsonable(config.fixture_path) or "",
        "search_endpoint": config.search_endpoint,
        "search_fixture": _jsonable(config.search_fixture) or "",
        "disabled_tools": _jsonable(config.disabled_tools),
        "budget": {
            "max_shell_commands": budget.max_shell_commands,
            "max_self_fix_attempts": budget.max_self_fix_attempts,
            "max_error_solver_activations": budget.max_error_solver_activations,
            "wall_clock_seconds": budget.wall_clock_seconds,
            "token_budget": budget.token_budget,
        },
        "discussion": {
            "agents": discussion.agents,
            "rounds": discussion.rounds,
            "theta": discussion.theta,
        },
    }
    return sha256_hex(canonical_json(doc))


def default_search_backend(config: RunConfig, env: dict | None = None):
    env = env if env is not None else os.environ
    if config.search_fixture is not None:
        return FixtureSearchBackend(config.search_fixture)
    if config.search_endpoint:
        return ApiSearchBackend(config.search_endpoint,
                                env.get(ENV_SEARCH_KEY, ""))
    return None


def _validate_grid(manifest, methods, models, registry) -> None:
    # deferred: baselines build on the orchestrator, which uses bench.verify
    from buildpilot.baselines.runner import BASELINE_METHODS

    if not manifest:
        raise ConfigError("benchmark manifest holds no projects")
    if not methods:
        raise ConfigError("no methods selected")
    if not models:
        raise ConfigError("no models selected")
    known = set(STRATEGIES) | set(BASELINE_METHODS)
    for method in methods:
        if method not in known:
            raise UnknownStrategy(
                f"unknown method {method!r} (want one of {', '.join(sorted(known))})")
    if registry is not None:
        for model_id in models:
            profile = registry.get(model_id)
            if "toolcall" in methods and not profile.supports_tool_calls:
                raise ConfigError(
                    f"method toolcall needs tool-call support; "
                    f"model {model_id!r} lacks it")


def _load_existing(path: Path) -> RunRecord | None:
    if not path.exists():
        return None
    try:
        return RunRecord.from_json(json.loads(path.read_text(encoding="utf-8")))
    except (ValueError, KeyError, TypeError) as exc:
        logger.warning("%s: unreadable record, cell will re-run: %s", path, exc)
        return None


def _write_record(path: Path, record: RunRecord) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(record.to_json(), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


def load_records(run_dir: Path | str) -> list[RunRecord]:
    """Every persisted cell record under a benchmark run directory.

    Unlike resume (which quietly re-runs unreadable cells), reporting must
    not drop data on the floor, so a corrupt record is an error here.
    """
    run_dir = Path(run_dir)
    records = []
    for path in sorted(run_dir.glob(f"*/{RECORD_FILE}")):
        try:
            records.append(
                RunRecord.from_json(json.loads(path.read_text(encoding="utf-8"))))
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(f"{path}: unreadable run record: {exc}") from exc
    if not records:
        raise ConfigError(f"no run records under {run_dir}")
    return records


def _failed_outcome(reason: str = "SandboxError") -> SessionOutcome:
    return SessionOutcome(status="failure", failure_reason=reason,
                          elapsed_seconds=0.0, cost_usd=Decimal(0),
                          commands_run=0, error_solver_rounds_used=0)


def _inert_gateway() -> GatewayBundle:
    """Bundle for methods that never call a model: no creds, no fixtures."""

    def refuse(profile):
        raise ConfigError(
            f"method issued a model call ({profile.model_id}) but was "
            "declared model-free")

    ledger = UsageLedger()
    return GatewayBundle(
        gateway=Gateway(ModelRegistry([replay_profile()]), ledger, refuse),
        ledger=ledger)


def _run_cell(project: ProjectSpec, method: str, model_id: str,
              config: RunConfig, runtime, gateway_factory,
              search_backend, fetcher, clock,
              m_digest: str, c_digest: str) -> RunRecord:
    from buildpilot.baselines.runner import BASELINE_METHODS, run_baseline

    cell_id = make_cell_id(project.name, method, model_id)
    cell_dir = config.run_dir / cell_id
    timestamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        bundle = gateway_factory(project, method, model_id)
        gateway = getattr(bundle, "gateway", bundle)
        try:
            if method in BASELINE_METHODS:
                cfg = replace(config, model_id=model_id, label=cell_id)
                run = run_baseline(method, project, cfg, gateway, runtime,
                                   clock=clock, out_dir=cell_dir)
            else:
                cfg = replace(config, strategy=method, method=method,
                              model_id=model_id, label=cell_id)
                run = run_project(project, cfg, gateway, runtime,
                                  search_backend=search_backend,
                                  fetcher=fetcher, clock=clock,
                                  out_dir=cell_dir)
        finally:
            flush = getattr(bundle, "flush", None)
            if callable(flush):
                flush()
    except BuildPilotError as exc:
        # the session wrapper absorbs in-run errors; anything landing here
        # failed before a session existed (bad fixture archive, dead creds)
        logger.error("cell %s failed outside the session: %s", cell_id, exc)
        return RunRecord(project=project.name, method=method, model_id=model_id,
                         outcome=_failed_outcome(), verified=False,
                         timestamp=timestamp, cell_id=cell_id,
                         manifest_digest=m_digest, config_digest=c_digest)

    per_tool = Counter(inv.tool_id for inv in run.invocations)
    return RunRecord(
        project=project.name,
        method=method,
        model_id=model_id,
        outcome=run.outcome,
        verified=run.succeeded,
        timestamp=timestamp,
        cell_id=cell_id,
        per_tool=dict(per_tool),
        transcript_digest=run.transcript_digest(),
        manifest_digest=m_digest,
        config_digest=c_digest,
    )


def run_benchmark(
    manifest: list[ProjectSpec],
    methods: list[str],
    models: list[str],
    config: RunConfig,
    parallelism: int = 1,
    registry: ModelRegistry | None = None,
    runtime=None,
    gateway_factory=None,
    search_backend=None,
    fetcher=None,
    clock=time.monotonic,
) -> list[RunRecord]:
    """Run every (project, method, model) cell and return records in grid order.

    Completed cells found under config.run_dir with a matching config and
    manifest digest are reused, not re-executed.
    """
    if parallelism < 1:
        raise ConfigError("parallelism must be >= 1")
    if gateway_factory is None and registry is None:
        registry = ModelRegistry([replay_profile()])
    _validate_grid(manifest, methods, models, registry)
    if runtime is None:
        from buildpilot.sandbox.runtime import resolve_runtime

        runtime = resolve_runtime(config.runtime)
    if gateway_factory is None:
        def gateway_factory(project, method, model_id):
            from buildpilot.baselines.runner import NO_LLM_METHODS

            if method in NO_LLM_METHODS:
                return _inert_gateway()
            archive = None
            if config.fixture_path is not None:
                archive = resolve_archive_dir(
                    config.fixture_path, project.name, method, model_id)
            return build_gateway(config, registry, model_id=model_id,
                                 archive_dir=archive)
    if search_backend is None:
        search_backend = default_search_backend(config)

    m_digest = manifest_digest(manifest)
    c_digest = config_digest(config)
    grid = [(project, method, model_id)
            for project in manifest for method in methods for model_id in models]

    done: dict[str, RunRecord] = {}
    todo = []
    for project, method, model_id in grid:
        cell_id = make_cell_id(project.name, method, model_id)
        existing = _load_existing(config.run_dir / cell_id / RECORD_FILE)
        if (existing is not None
                and existing.config_digest == c_digest
                and existing.manifest_digest == m_digest):
            done[cell_id] = existing
        else:
            todo.append((project, method, model_id))
    if done:
        logger.info("resuming: %d of %d cells already recorded",
                    len(done), len(grid))

    if todo:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            pending = {
                pool.submit(_run_cell, project, method, model_id, config,
                            runtime, gateway_factory, search_backend, fetcher,
                            clock, m_digest, c_digest)
                for project, method, model_id in todo
            }
            # record sink stays on this thread so writes are serialized
            while pending:
                finished, pending = wait(pending, return_when=FIRST_COMPLETED)
                for future in finished:
                    record = future.result()
                    _write_record(config.run_dir / record.cell_id / RECORD_FILE,
                                  record)
                    done[record.cell_id] = record

    return [done[make_cell_id(project.name, method, model_id)]
            for project, method, model_id in grid]
