"""Turning a candidate file into a runnable command plan."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from buildpilot import prompts
from buildpilot.errors import ExtractionFailure, FetchFailure, NotText
from buildpilot.gateway.types import ChatMessage, ChatRequest
from buildpilot.navigator.locate import CandidateFile
from buildpilot.navigator.web import fetch_page, markdown_links, scan_urls
from buildpilot.parsing import extract_commands, is_none_reply

logger = logging.getLogger(__name__)

URL_KEYWORDS = ("build", "install", "compil", "doc")
MAX_FOLLOWED_URLS = 2


@dataclass(frozen=True)
class InstructionPlan:
    """Ordered build commands extracted from documentation."""

    steps: tuple[str, ...]
    source_path: str
    followed_urls: tuple[str, ...] = ()
    notes: str = ""


def relevant_urls(content: str) -> list[str]:
    """Doc-link URLs worth following: keyword in the URL or its link text."""
    by_url: dict[str, str] = {}
    for text, url in markdown_links(content):
        by_url.setdefault(url, text.lower())
    ordered: list[str] = []
    for url in scan_urls(content):
        haystack = url.lower() + " " + by_url.get(url, "")
        if any(k in haystack for k in URL_KEYWORDS):
            ordered.append(url)
    return ordered


def extract_instructions(
    candidate: CandidateFile,
    session,
    gateway,
    model_id: str,
    follow_urls: bool = True,
    fetcher=None,
) -> InstructionPlan:
    """Read a candidate file, optionally follow up to two documentation
    links, and summarize everything into validated shell commands.

    A reply with no parseable commands earns one stricter retry; after that,
    ExtractionFailure. follow_urls=False skips link fetching entirely (the
    degraded mode used when web crawling is ablated or the run is hermetic).
    """
    content = session.read_file(candidate.path)
    pages: list[tuple[str, str]] = []
    followed: list[str] = []
    if follow_urls:
        for url in relevant_urls(content):
            if len(followed) >= MAX_FOLLOWED_URLS:
                break
            try:
                if fetcher is None:
                    page_text = fetch_page(url)
                else:
                    page_text = fetch_page(url, fetcher=fetcher)
            except (FetchFailure, NotText) as exc:
                logger.info("skipping link %s: %s", url, exc)
                continue
            pages.append((url, page_text))
            followed.append(url)

    for attempt in range(2):
        system, user = prompts.summarize_instructions(
            candidate.path, content, pages, strict=attempt > 0
        )
        response = gateway.complete(
            ChatRequest(
                model_id=model_id,
                messages=[ChatMessage("system", system), ChatMessage("user", user)],
                tag=prompts.TAG_SUMMARIZE,
            )
        )
        if is_none_reply(response.text):
            raise ExtractionFailure(f"{candidate.path} holds no build instructions")
        steps = extract_commands(response.text)
        if steps:
            notes = response.text.split("```")[0].strip()
            return InstructionPlan(
                steps=tuple(steps),
                source_path=candidate.path,
                followed_urls=tuple(followed),
                notes=notes,
            )
        logger.info("no parseable commands from %s (attempt %d)", candidate.path, attempt + 1)
    raise ExtractionFailure(
        f"could not extract runnable commands from {candidate.path}"
    )
