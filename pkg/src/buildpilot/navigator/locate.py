"""Locating build-guide files: two ranking agents merged by Borda count,
with a filename heuristic as the fallback."""

from __future__ import annotations

import fnmatch
import logging
from dataclasses import dataclass

from buildpilot import prompts
from buildpilot.errors import NoCandidate
from buildpilot.gateway.types import ChatMessage, ChatRequest
from buildpilot.parsing import extract_ranked_paths, is_none_reply
from buildpilot.sandbox.listing import parse_tree_paths

logger = logging.getLogger(__name__)

MAX_CANDIDATES = 5

HEURISTIC_PATTERNS = (
    "README*", "readme*", "INSTALL*", "install*", "BUILD*", "build*.md",
    "COMPILE*", "HACKING*", "docs/README*", "docs/INSTALL*", "docs/BUILD*",
    "doc/README*", "doc/INSTALL*", "CONTRIBUTING*",
)


@dataclass(frozen=True)
class CandidateFile:
    """A file believed to hold build instructions, with its merged rank."""

    path: str
    rank: int
    source: str = "agent"  # agent | heuristic


def heuristic_candidates(paths: set[str]) -> list[str]:
    """Filename-pattern scan over repo paths, stable order."""
    hits: list[str] = []
    for pattern in HEURISTIC_PATTERNS:
        for path in sorted(paths):
            if fnmatch.fnmatch(path, pattern) and path not in hits:
                hits.append(path)
    return hits


def borda_merge(lists: list[list[str]]) -> list[str]:
    """Merge ranked lists by Borda count; ties broken by earliest appearance."""
    scores: dict[str, int] = {}
    first_seen: dict[str, tuple[int, int]] = {}
    for list_index, ranked in enumerate(lists):
        n = len(ranked)
        for idx, item in enumerate(ranked):
            scores[item] = scores.get(item, 0) + (n - idx)
            first_seen.setdefault(item, (list_index, idx))
    return sorted(scores, key=lambda item: (-scores[item], first_seen[item], item))


def _ask_ranked(gateway, model_id: str, tag: str, system: str, user: str) -> list[str]:
    response = gateway.complete(
        ChatRequest(
            model_id=model_id,
            messages=[ChatMessage("system", system), ChatMessage("user", user)],
            tag=tag,
        )
    )
    if is_none_reply(response.text):
        return []
    return extract_ranked_paths(response.text)


def locate_guide_files(structure: str, gateway, model_id: str) -> list[CandidateFile]:
    """Find up to MAX_CANDIDATES build-guide files in a structure listing.

    A proposing agent ranks candidates, a reviewing agent corrects the list,
    and the two rankings merge by Borda count. Paths not present in the
    listing are dropped as hallucinations. When the agents produce nothing
    usable the filename heuristic takes over; NoCandidate only when both
    routes come up empty.
    """
    known_paths = parse_tree_paths(structure)
    proposed = _ask_ranked(gateway, model_id, prompts.TAG_SEARCH_I,
                           *prompts.candidate_files(structure))
    reviewed = _ask_ranked(gateway, model_id, prompts.TAG_SEARCH_II,
                           *prompts.candidate_files_review(structure, proposed))
    merged = [p for p in borda_merge([proposed, reviewed]) if p in known_paths]
    dropped = [p for p in borda_merge([proposed, reviewed]) if p not in known_paths]
    if dropped:
        logger.info("dropped hallucinated candidate paths: %s", dropped)
    source = "agent"
    if not merged:
        merged = heuristic_candidates(known_paths)
        source = "heuristic"
    if not merged:
        raise NoCandidate("no plausible build-guide files in the repository")
    return [
        CandidateFile(path=path, rank=rank, source=source)
        for rank, path in enumerate(merged[:MAX_CANDIDATES], start=1)
    ]
