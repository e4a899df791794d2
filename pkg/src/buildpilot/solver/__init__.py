"""Error solving: web evidence, multi-agent discussion, term-overlap consensus."""

from buildpilot.solver.classify import ErrorContext, classify_error, error_report
from buildpilot.solver.consensus import check_consensus, pairwise_overlap, segment_terms
from buildpilot.solver.discussion import ConsensusResult, DiscussionConfig, Solution, discuss
from buildpilot.solver.search import (
    ApiSearchBackend,
    FixtureSearchBackend,
    SearchResult,
    search_web,
)

__all__ = [
    "ApiSearchBackend",
    "ConsensusResult",
    "DiscussionConfig",
    "ErrorContext",
    "FixtureSearchBackend",
    "SearchResult",
    "Solution",
    "check_consensus",
    "classify_error",
    "discuss",
    "error_report",
    "pairwise_overlap",
    "search_web",
    "segment_terms",
]
