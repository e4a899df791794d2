"""Documentation-generation baseline: write a readme, then build from it.

The repository's text files (bounded selection) go to a documentation agent
that must produce a readme containing a build section; the commands in that
section become the plan. One generation call, no recovery.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

from buildpilot import prompts
from buildpilot.errors import BinaryFile, ExtractionFailure, FileNotFound
from buildpilot.gateway.types import ChatMessage, ChatRequest
from buildpilot.navigator.extract import InstructionPlan
from buildpilot.parsing import extract_commands
from buildpilot.sandbox.listing import parse_tree_paths

logger = logging.getLogger(__name__)

MAX_FILES = 40
MAX_TOTAL_BYTES = 256 * 1024

GENERATED_README = "generated_readme.md"

BUILD_SECTION = "How to compile/build from source code"

_SECTION_RE = re.compile(
    r"^#{1,3}\s*" + re.escape(BUILD_SECTION) + r"\s*$",
    re.IGNORECASE | re.MULTILINE,
)
_NEXT_HEADING_RE = re.compile(r"^#{1,3}\s+\S", re.MULTILINE)

# Lower scores are read first; everything else competes by size.
_NAME_SCORES = (
    ("readme", 0),
    ("install", 1),
    ("build", 2),
    ("compil", 3),
    ("makefile", 4),
    ("cmakelists.txt", 4),
    ("configure", 4),
    (".md", 6),
)


def _name_score(path: str) -> int:
    base = path.rsplit("/", 1)[-1].lower()
    for needle, score in _NAME_SCORES:
        if needle in base:
            return score
    if path.lower().startswith("docs/"):
        return 5
    return 9


def collect_repo_files(session, max_files: int = MAX_FILES,
                       max_total_bytes: int = MAX_TOTAL_BYTES) -> list[tuple[str, str]]:
    """Bounded (path, text) selection: doc-like names first, then small files."""
    paths = sorted(parse_tree_paths(session.fetch_structure()))
    stats = []
    for path in paths:
        st = session.stat(path)
        if st.exists and not st.is_dir:
            stats.append((path, st.size))
    stats.sort(key=lambda item: (_name_score(item[0]), item[1], item[0]))

    out: list[tuple[str, str]] = []
    total = 0
    for path, size in stats:
        if len(out) >= max_files:
            break
        take = max_total_bytes - total
        if take <= 0:
            break
        try:
            text = session.read_file(path, max_bytes=take)
        except (BinaryFile, FileNotFound):
            continue
        out.append((path, text))
        total += min(size, take)
    return out


def extract_build_section(readme: str) -> str:
    """Body of the mandated build section, up to the next heading."""
    match = _SECTION_RE.search(readme)
    if match is None:
        raise ExtractionFailure(
            f"generated readme lacks the section {BUILD_SECTION!r}")
    start = match.end()
    nxt = _NEXT_HEADING_RE.search(readme, start)
    return readme[start:nxt.start() if nxt else len(readme)]


def readme_ai_plan(session, gateway, model_id: str, project_name: str,
                   out_dir: Path | None = None) -> InstructionPlan:
    """Generate a readme for the repo and lift the build commands out of it."""
    files = collect_repo_files(session)
    if not files:
        raise ExtractionFailure("repository has no readable text files")
    system, user = prompts.readme_generate(project_name, files)
    response = gateway.complete(ChatRequest(
        model_id=model_id,
        messages=[ChatMessage("system", system), ChatMessage("user", user)],
        tag=prompts.TAG_README_AI,
    ))
    readme = response.text
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / GENERATED_README).write_text(readme, encoding="utf-8")
    section = extract_build_section(readme)
    commands = extract_commands(section)
    if not commands:
        raise ExtractionFailure("build section contains no parseable commands")
    return InstructionPlan(
        steps=tuple(commands),
        source_path=GENERATED_README,
        notes=f"generated from {len(files)} repository files",
    )
