"""Non-agentic comparison methods: rule table, readme generation, retrieval."""

from buildpilot.baselines.rag import (
    Chunk,
    ChunkIndex,
    candidate_doc_paths,
    chunk_windows,
    load_index,
    rag_index,
    rag_query,
    rank_chunks,
    save_index,
)
from buildpilot.baselines.readme_ai import collect_repo_files, readme_ai_plan
from buildpilot.baselines.rules import DEFAULT_RULES, BuildRule, detect_build_rule
from buildpilot.baselines.runner import BASELINE_METHODS, run_baseline

__all__ = [
    "BASELINE_METHODS",
    "BuildRule",
    "Chunk",
    "ChunkIndex",
    "DEFAULT_RULES",
    "candidate_doc_paths",
    "chunk_windows",
    "collect_repo_files",
    "detect_build_rule",
    "load_index",
    "rag_index",
    "rag_query",
    "rank_chunks",
    "readme_ai_plan",
    "run_baseline",
    "save_index",
]
