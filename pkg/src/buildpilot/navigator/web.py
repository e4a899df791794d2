"""URL scanning and page fetching with an injectable transport."""

from __future__ import annotations

import logging
import re
from html.parser import HTMLParser

from buildpilot.errors import FetchFailure, NotText

logger = logging.getLogger(__name__)

PAGE_BYTE_CAP = 65536
FETCH_TIMEOUT = 20.0

_URL = re.compile(r"https?://[^\s<>()\[\]{}\"']+")
_MD_LINK = re.compile(r"\[([^\]]+)\]\((https?://[^)\s]+)\)")
_TEXT_TYPES = ("text/", "application/json", "application/xhtml")


def scan_urls(text: str) -> list[str]:
    """All http(s) URLs in order of first appearance, deduplicated."""
    seen: list[str] = []
    for match in _URL.finditer(text):
        url = match.group(0).rstrip(".,;:!?")
        if url not in seen:
            seen.append(url)
    return seen


def markdown_links(text: str) -> list[tuple[str, str]]:
    """(link text, url) pairs from markdown-style links."""
    return [(m.group(1), m.group(2).rstrip(".,;")) for m in _MD_LINK.finditer(text)]


class _TextExtractor(HTMLParser):
    _SKIP = ("script", "style", "noscript", "head")

    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.chunks: list[str] = []
        self._skip_depth = 0

    def handle_starttag(self, tag, attrs):
        if tag in self._SKIP:
            self._skip_depth += 1

    def handle_endtag(self, tag):
        if tag in self._SKIP and self._skip_depth > 0:
            self._skip_depth -= 1

    def handle_data(self, data):
        if self._skip_depth == 0 and data.strip():
            self.chunks.append(data)


def html_to_text(html: str) -> str:
    parser = _TextExtractor()
    parser.feed(html)
    text = "\n".join(chunk.strip() for chunk in parser.chunks)
    return re.sub(r"\n{3,}", "\n\n", text).strip()


def requests_fetcher(url: str, timeout: float) -> tuple[int, str, bytes]:
    import requests

    resp = requests.get(url, timeout=timeout, headers={"User-Agent": "buildpilot/0.1"},
                        stream=True)
    content = resp.raw.read(PAGE_BYTE_CAP + 1, decode_content=True)
    return resp.status_code, resp.headers.get("Content-Type", ""), content


def fetch_page(url: str, fetcher=requests_fetcher, retries: int = 1) -> str:
    """Fetch a URL and return readable text, capped at PAGE_BYTE_CAP bytes.

    HTML is reduced to text; non-text content types raise NotText; transport
    errors and bad statuses raise FetchFailure after one retry.
    """
    last_error: Exception | None = None
    for _attempt in range(retries + 1):
        try:
            status, content_type, content = fetcher(url, FETCH_TIMEOUT)
        except NotText:
            raise
        except Exception as exc:
            last_error = exc
            continue
        if status >= 400:
            last_error = FetchFailure(f"GET {url} returned {status}")
            continue
        main_type = (content_type or "").split(";")[0].strip().lower()
        if main_type and not any(main_type.startswith(t) for t in _TEXT_TYPES):
            raise NotText(f"{url} returned {main_type}")
        text = content[:PAGE_BYTE_CAP].decode("utf-8", errors="replace")
        if "html" in main_type or text.lstrip()[:1] == "<":
            text = html_to_text(text)
        return text
    raise FetchFailure(f"could not fetch {url}: {last_error}")
