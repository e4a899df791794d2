"""Error context and rule-first/LLM-fallback failure classification."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field

from buildpilot import prompts
from buildpilot.gateway.types import ChatMessage, ChatRequest

logger = logging.getLogger(__name__)

CLASSIFICATIONS = ("dependency", "toolchain", "configuration", "unknown")

TOOLCHAIN_COMMANDS = frozenset({
    "gcc", "cc", "g++", "c++", "clang", "clang++", "make", "gmake", "cmake",
    "autoconf", "automake", "autoreconf", "libtool", "libtoolize",
    "pkg-config", "ninja", "meson", "bison", "flex", "yacc", "m4", "ld", "ar",
})

_DEPENDENCY_PATTERNS = (
    re.compile(r"fatal error: .+\.h.*: No such file or directory"),
    re.compile(r"cannot find -l\S+"),
    re.compile(r"No package '.+' found"),
    re.compile(r"undefined reference to"),
    re.compile(r"(?:library|header) .*not found", re.IGNORECASE),
)
_CONFIGURATION_PATTERNS = (
    re.compile(r"configure: error"),
    re.compile(r"CMake Error"),
    re.compile(r"Makefile:\d+: \*\*\* missing separator"),
)
_NOT_FOUND = re.compile(r"(?:^|[:\s])([\w.+-]+): command not found", re.MULTILINE)


@dataclass
class ErrorContext:
    """Everything the solver knows about one failing step."""

    command: str
    exit_code: int
    stderr_excerpt: str
    stdout_excerpt: str = ""
    os_fingerprint: str = ""
    classification: str = "unknown"
    evidence: str = ""
    prior_attempts: list[str] = field(default_factory=list)


def error_report(ctx: ErrorContext) -> str:
    prior = "\n".join(f"- {p}" for p in ctx.prior_attempts) or "(none)"
    return (
        "A build step failed.\n"
        f"Environment: {ctx.os_fingerprint or 'unknown'}\n"
        f"Command: {ctx.command}\n"
        f"Exit code: {ctx.exit_code}\n"
        f"Error class: {ctx.classification}\n"
        f"stderr:\n{ctx.stderr_excerpt}\n\n"
        f"stdout:\n{ctx.stdout_excerpt}\n\n"
        f"Fixes already attempted:\n{prior}"
    )


def rule_classify(stderr: str) -> str | None:
    for pattern in _DEPENDENCY_PATTERNS:
        if pattern.search(stderr):
            return "dependency"
    match = _NOT_FOUND.search(stderr)
    if match:
        return "toolchain" if match.group(1) in TOOLCHAIN_COMMANDS else "dependency"
    for pattern in _CONFIGURATION_PATTERNS:
        if pattern.search(stderr):
            return "configuration"
    return None


def classify_error(ctx: ErrorContext, gateway=None, model_id: str = "") -> str:
    """Classify the failure, preferring rules; fall back to one model call.

    Updates ctx.classification in place and returns it. Without a gateway
    (or on an unrecognized model answer) unmatched errors stay "unknown".
    """
    label = rule_classify(ctx.stderr_excerpt or "")
    if label is None and ctx.stdout_excerpt:
        label = rule_classify(ctx.stdout_excerpt)
    if label is None and gateway is not None:
        tail = "\n".join((ctx.stderr_excerpt or "").splitlines()[-20:])
        system, user = prompts.classify_error(ctx.command, tail)
        response = gateway.complete(
            ChatRequest(
                model_id=model_id,
                messages=[ChatMessage("system", system), ChatMessage("user", user)],
                tag=prompts.TAG_CLASSIFIER,
                max_output_tokens=16,
            )
        )
        answer = response.text.strip().lower().strip(".")
        label = answer if answer in CLASSIFICATIONS else "unknown"
        if answer not in CLASSIFICATIONS:
            logger.info("classifier answered %r; treating as unknown", response.text)
    ctx.classification = label or "unknown"
    return ctx.classification
