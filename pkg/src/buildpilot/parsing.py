"""Parsers for model output: fenced command blocks, ranked file lists.

Models are asked to answer in fenced ```bash blocks with one command per
line. Everything here is defensive: numbering, prompts copied back, comment
lines, and invalid shell all get dropped rather than executed.
"""

from __future__ import annotations

import functools
import logging
import re
import subprocess

logger = logging.getLogger(__name__)

_FENCE = re.compile(r"```(?:bash|sh|shell|console)?\s*\n(.*?)```", re.DOTALL)
_RANKED_LINE = re.compile(r"^\s*(?:\d+[.)]\s*|[-*]\s+)?[`\"']?([^`\"'\s]+)[`\"']?\s*$")
_PROMPT_PREFIX = re.compile(r"^\$\s+")
NONE_SENTINEL = "NONE"


@functools.lru_cache(maxsize=4096)
def bash_syntax_ok(command: str) -> bool:
    """True when bash -n accepts the command."""
    if not command.strip():
        return False
    try:
        proc = subprocess.run(
            ["bash", "-n", "-c", command],
            capture_output=True,
            timeout=10,
        )
    except (subprocess.TimeoutExpired, OSError):
        return False
    return proc.returncode == 0


def extract_fenced_blocks(text: str) -> list[str]:
    return [m.group(1) for m in _FENCE.finditer(text)]


def extract_commands(text: str, validate: bool = True) -> list[str]:
    """Shell commands from the first fenced block(s) of a reply.

    Strips `$ ` prompts and comment lines; with validate=True, lines that do
    not parse as bash are dropped.
    """
    commands: list[str] = []
    for block in extract_fenced_blocks(text):
        for line in block.splitlines():
            line = _PROMPT_PREFIX.sub("", line.strip())
            if not line or line.startswith("#"):
                continue
            if validate and not bash_syntax_ok(line):
                logger.debug("dropping unparseable command line: %r", line)
                continue
            commands.append(line)
    return commands


def is_none_reply(text: str) -> bool:
    stripped = text.strip().strip("`").strip()
    return stripped.upper() == NONE_SENTINEL or stripped.upper().startswith(NONE_SENTINEL + "\n")


def extract_ranked_paths(text: str, limit: int = 20) -> list[str]:
    """Ordered file paths from a (possibly fenced, possibly numbered) list."""
    body = text
    blocks = extract_fenced_blocks(text)
    if blocks:
        body = "\n".join(blocks)
    paths: list[str] = []
    for line in body.splitlines():
        if not line.strip() or is_none_reply(line):
            continue
        match = _RANKED_LINE.match(line)
        if not match:
            continue
        path = match.group(1).strip().lstrip("./")
        if not path or path.endswith(":"):
            continue
        if path not in paths:
            paths.append(path)
        if len(paths) >= limit:
            break
    return paths
