"""Repository navigation: find build guides, follow doc links, extract commands."""

from buildpilot.navigator.extract import InstructionPlan, extract_instructions
from buildpilot.navigator.locate import CandidateFile, heuristic_candidates, locate_guide_files
from buildpilot.navigator.web import fetch_page, html_to_text, scan_urls

__all__ = [
    "CandidateFile",
    "InstructionPlan",
    "extract_instructions",
    "fetch_page",
    "heuristic_candidates",
    "html_to_text",
    "locate_guide_files",
    "scan_urls",
]
