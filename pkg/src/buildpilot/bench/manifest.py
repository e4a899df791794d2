"""Benchmark manifest: JSON-lines of project records, validated on load.

One project per line so manifests diff cleanly and a single bad line can be
reported with its line number. The guide-category split is checked against
the 7:2:1 composition when the caller asks for a strict load.
"""

from __future__ import annotations

import json
import logging
import re
from pathlib import Path

from buildpilot.digests import canonical_json, sha256_hex
from buildpilot.errors import ParseError, RatioViolation, SchemaViolation
from buildpilot.project import GUIDE_CATEGORIES, TOPICS, ProjectSpec, Target

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# in_repo : not_in_repo : no_guide
GUIDE_RATIO = {"in_repo": 7, "not_in_repo": 2, "no_guide": 1}

_FULL_HASH = re.compile(r"^[0-9a-f]{40}$")

_REQUIRED_FIELDS = (
    "name", "repo_url", "revision", "topic", "guide_category", "expected_targets",
)


def _field_error(where: str, field: str, problem: str) -> SchemaViolation:
    return SchemaViolation(f"{where}: field {field!r}: {problem}")


def parse_record(record: dict, where: str) -> ProjectSpec:
    """One manifest line to a ProjectSpec, every field checked by name."""
    if not isinstance(record, dict):
        raise SchemaViolation(f"{where}: expected an object, got {type(record).__name__}")
    version = record.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise _field_error(where, "schema_version", f"unsupported value {version!r}")
    for field in _REQUIRED_FIELDS:
        if field not in record:
            raise _field_error(where, field, "missing")

    name = record["name"]
    if not isinstance(name, str) or not name:
        raise _field_error(where, "name", "must be a non-empty string")
    repo_url = record["repo_url"]
    if not isinstance(repo_url, str) or not repo_url:
        raise _field_error(where, "repo_url", "must be a non-empty string")
    revision = record["revision"]
    if not isinstance(revision, str) or not _FULL_HASH.match(revision):
        raise _field_error(where, "revision", "must be a full 40-hex commit hash")
    topic = record["topic"]
    if topic not in TOPICS:
        raise _field_error(where, "topic", f"unknown value {topic!r}")
    category = record["guide_category"]
    if category not in GUIDE_CATEGORIES:
        raise _field_error(where, "guide_category", f"unknown value {category!r}")

    raw_targets = record["expected_targets"]
    if not isinstance(raw_targets, list) or not raw_targets:
        raise _field_error(where, "expected_targets", "must be a non-empty list")
    targets = []
    for i, item in enumerate(raw_targets):
        if not isinstance(item, dict) or "path" not in item or "kind" not in item:
            raise _field_error(where, f"expected_targets[{i}]",
                               "must be an object with path and kind")
        try:
            targets.append(Target(path=item["path"], kind=item["kind"]))
        except ValueError as exc:
            raise _field_error(where, f"expected_targets[{i}]", str(exc)) from exc

    timeout = record.get("timeout_override")
    if timeout is not None:
        if not isinstance(timeout, (int, float)) or isinstance(timeout, bool) or timeout <= 0:
            raise _field_error(where, "timeout_override", "must be a positive number")
        timeout = float(timeout)

    return ProjectSpec(
        name=name,
        repo_url=repo_url,
        revision=revision,
        topic=topic,
        guide_category=category,
        expected_targets=tuple(targets),
        timeout_override=timeout,
    )


def check_ratio(projects: list[ProjectSpec]) -> None:
    """Guide categories must split 7:2:1 within rounding of the ideal counts.

    For sizes where the ideal counts are whole (100, 10, ...) this demands
    the exact split. The all-topics check only makes sense once the manifest
    is large enough to hold every topic, so it is scoped to n >= 14.
    """
    n = len(projects)
    total_share = sum(GUIDE_RATIO.values())
    counts = {category: 0 for category in GUIDE_RATIO}
    for project in projects:
        counts[project.guide_category] += 1
    for category, share in GUIDE_RATIO.items():
        ideal = n * share / total_share
        if abs(counts[category] - ideal) >= 1.0:
            observed = "/".join(str(counts[c]) for c in GUIDE_RATIO)
            wanted = "/".join(f"{n * s / total_share:g}" for s in GUIDE_RATIO.values())
            raise RatioViolation(
                f"guide split {observed} does not match 7:2:1 for "
                f"{n} projects (want {wanted})")
    if n >= len(TOPICS):
        seen = {project.topic for project in projects}
        if len(seen) != len(TOPICS):
            missing = sorted(set(TOPICS) - seen)
            raise RatioViolation(
                f"expected all {len(TOPICS)} topics, found {len(seen)} "
                f"(missing: {', '.join(missing)})")


def load_manifest(path: Path | str, strict_ratio: bool = False) -> list[ProjectSpec]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: cannot read manifest: {exc}") from exc

    projects: list[ProjectSpec] = []
    seen_names: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        where = f"{path}:{lineno}"
        try:
            record = json.loads(line)
        except ValueError as exc:
            raise ParseError(f"{where}: invalid JSON: {exc}") from exc
        project = parse_record(record, where)
        if project.name in seen_names:
            raise SchemaViolation(f"{where}: duplicate project name {project.name!r}")
        seen_names.add(project.name)
        projects.append(project)

    if not projects:
        raise SchemaViolation(f"{path}: manifest holds no project records")
    if strict_ratio:
        check_ratio(projects)
    logger.info("loaded %d projects from %s", len(projects), path)
    return projects


def project_to_record(project: ProjectSpec) -> dict:
    record = {
        "schema_version": SCHEMA_VERSION,
        "name": project.name,
        "repo_url": project.repo_url,
        "revision": project.revision,
        "topic": project.topic,
        "guide_category": project.guide_category,
        "expected_targets": [
            {"path": t.path, "kind": t.kind} for t in project.expected_targets
        ],
    }
    if project.timeout_override is not None:
        record["timeout_override"] = project.timeout_override
    return record


def save_manifest(path: Path | str, projects: list[ProjectSpec]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps(project_to_record(p), ensure_ascii=False, sort_keys=True)
             for p in projects]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def manifest_digest(projects: list[ProjectSpec]) -> str:
    """Identity of the project set: names and pins, order-independent."""
    pairs = sorted((p.name, p.revision) for p in projects)
    return sha256_hex(canonical_json([list(pair) for pair in pairs]))
