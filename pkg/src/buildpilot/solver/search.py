"""Web search for build errors, with developer-site prioritization.

Backends share one interface: search(query) -> list[SearchResult]. The
fixture backend serves canned results for hermetic runs; the API backend
posts to a configurable JSON endpoint; the scrape backend is a best-effort
HTML fallback. search_web() fetches the top pages and condenses them with
one aggregation call.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from urllib.parse import quote_plus, urlparse

from buildpilot import prompts
from buildpilot.errors import FetchFailure, NoResults, NotText, SearchUnavailable
from buildpilot.gateway.types import ChatMessage, ChatRequest
from buildpilot.navigator.web import fetch_page

logger = logging.getLogger(__name__)

PRIORITY_DOMAINS = ("github.com", "stackoverflow.com")
DEFAULT_MAX_RESULTS = 3


@dataclass(frozen=True)
class SearchResult:
    url: str
    title: str = ""
    snippet: str = ""
    content: str = ""  # inline page text (fixtures); skips fetching


def _domain_priority(url: str) -> int:
    netloc = urlparse(url).netloc.lower()
    for index, domain in enumerate(PRIORITY_DOMAINS):
        if netloc == domain or netloc.endswith("." + domain):
            return index
    return len(PRIORITY_DOMAINS)


def prioritize(results: list[SearchResult]) -> list[SearchResult]:
    """Developer sites first, original order preserved within each class."""
    return sorted(
        results,
        key=lambda r: (_domain_priority(r.url), results.index(r)),
    )


class FixtureSearchBackend:
    """Canned results from a search.jsonl file: {"query":..., "results":[...]}."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        if not self.path.exists():
            raise SearchUnavailable(f"search fixture {self.path} does not exist")
        self._by_query: dict[str, list[SearchResult]] = {}
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            results = [
                SearchResult(
                    url=r["url"],
                    title=r.get("title", ""),
                    snippet=r.get("snippet", ""),
                    content=r.get("content", ""),
                )
                for r in record.get("results", [])
            ]
            self._by_query[self._norm(record["query"])] = results

    @staticmethod
    def _norm(query: str) -> str:
        return " ".join(query.casefold().split())

    def search(self, query: str) -> list[SearchResult]:
        return self._by_query.get(self._norm(query), [])


class ApiSearchBackend:
    """JSON search API: POST {"q": query, "num": n} with a bearer key."""

    def __init__(self, endpoint: str, api_key: str, transport=None, num: int = 8):
        from buildpilot.gateway.providers import requests_transport

        self.endpoint = endpoint
        self.api_key = api_key
        self.transport = transport or requests_transport
        self.num = num

    def search(self, query: str) -> list[SearchResult]:
        headers = {"Authorization": f"Bearer {self.api_key}",
                   "Content-Type": "application/json"}
        try:
            status, body = self.transport(
                "POST", self.endpoint, headers, {"q": query, "num": self.num}, 20.0
            )
        except Exception as exc:
            raise SearchUnavailable(f"search API unreachable: {exc}") from exc
        if status >= 400:
            raise SearchUnavailable(f"search API returned {status}")
        rows = body.get("results") or body.get("organic") or []
        return [
            SearchResult(url=r.get("url") or r.get("link", ""),
                         title=r.get("title", ""), snippet=r.get("snippet", ""))
            for r in rows
            if r.get("url") or r.get("link")
        ]


class ScrapeSearchBackend:
    """Best-effort HTML results page scrape; no key needed, fragile by nature."""

    RESULT_LINK = re.compile(r'class="result__a"[^>]*href="([^"]+)"[^>]*>(.*?)</a>', re.DOTALL)

    def __init__(self, fetcher=None):
        self.fetcher = fetcher

    def search(self, query: str) -> list[SearchResult]:
        url = f"https://html.duckduckgo.com/html/?q={quote_plus(query)}"
        try:
            if self.fetcher is None:
                html = fetch_page(url)
            else:
                status, _ctype, content = self.fetcher(url, 20.0)
                if status >= 400:
                    raise SearchUnavailable(f"results page returned {status}")
                html = content.decode("utf-8", errors="replace")
        except (FetchFailure, NotText) as exc:
            raise SearchUnavailable(str(exc)) from exc
        results = []
        for href, title in self.RESULT_LINK.findall(html):
            results.append(SearchResult(url=href, title=re.sub(r"<[^>]+>", "", title).strip()))
        return results


def search_web(
    query: str,
    backend,
    gateway,
    model_id: str,
    max_results: int = DEFAULT_MAX_RESULTS,
    fetcher=None,
) -> str:
    """Search, prioritize developer sites, fetch pages, aggregate findings."""
    if backend is None:
        raise SearchUnavailable("no search backend configured")
    results = backend.search(query)
    if not results:
        raise NoResults(f"no results for {query!r}")
    chosen = prioritize(results)[:max_results]
    pages: list[tuple[str, str]] = []
    for result in chosen:
        if result.content:
            pages.append((result.url, result.content))
            continue
        try:
            if fetcher is None:
                pages.append((result.url, fetch_page(result.url)))
            else:
                pages.append((result.url, fetch_page(result.url, fetcher=fetcher)))
        except (FetchFailure, NotText) as exc:
            logger.info("using snippet for %s: %s", result.url, exc)
            if result.snippet:
                pages.append((result.url, result.snippet))
    if not pages:
        raise NoResults(f"results for {query!r} yielded no readable pages")
    system, user = prompts.search_aggregate(query, pages)
    response = gateway.complete(
        ChatRequest(
            model_id=model_id,
            messages=[ChatMessage("system", system), ChatMessage("user", user)],
            tag=prompts.TAG_SEARCH_AGG,
        )
    )
    return response.text
