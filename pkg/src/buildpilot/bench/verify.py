"""Build-output verification: expected artifacts exist and look the part.

Verification is read-only (stat plus a short byte probe per target) so a
probe can never change the tree it is judging.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from buildpilot.errors import BinaryFile, FileNotFound
from buildpilot.project import Target

logger = logging.getLogger(__name__)

ELF_MAGIC = b"\x7fELF"
AR_MAGIC = b"!<arch>\n"
SHEBANG = b"#!"


@dataclass(frozen=True)
class TargetReport:
    target: Target
    exists: bool
    verified: bool
    detail: str = ""


def _probe(session, path: str, length: int = 16) -> bytes:
    try:
        return session.read_bytes(path, max_bytes=length)
    except (FileNotFound, BinaryFile, OSError):
        return b""


def _check(session, target: Target) -> TargetReport:
    stat = session.stat(target.path)
    if not stat.exists:
        return TargetReport(target, False, False, "missing")
    if stat.is_dir:
        return TargetReport(target, True, False, "is a directory")
    if stat.size == 0:
        return TargetReport(target, True, False, "empty file")

    head = _probe(session, target.path)
    kind = target.kind
    if kind == "executable":
        executable_bit = bool(stat.mode & 0o111)
        looks_binary = head.startswith(ELF_MAGIC) or head.startswith(SHEBANG)
        if executable_bit and looks_binary:
            return TargetReport(target, True, True)
        detail = "not executable" if not executable_bit else "not ELF or script"
        return TargetReport(target, True, False, detail)
    if kind == "static_lib":
        if head.startswith(AR_MAGIC):
            return TargetReport(target, True, True)
        return TargetReport(target, True, False, "not an ar archive")
    if kind == "shared_lib":
        if head.startswith(ELF_MAGIC) and ".so" in target.path.rsplit("/", 1)[-1]:
            return TargetReport(target, True, True)
        return TargetReport(target, True, False, "not an ELF shared object")
    if kind == "object":
        if head.startswith(ELF_MAGIC) and target.path.endswith(".o"):
            return TargetReport(target, True, True)
        return TargetReport(target, True, False, "not an ELF object")
    return TargetReport(target, True, False, f"unknown kind {kind!r}")


def verify_targets(session, expected: tuple[Target, ...] | list[Target]
                   ) -> tuple[bool, list[TargetReport]]:
    """All expected targets must verify; an empty expectation never passes
    silently and is reported as unverified.
    """
    if not expected:
        return False, []
    reports = [_check(session, target) for target in expected]
    ok = all(r.verified for r in reports)
    for report in reports:
        if not report.verified:
            logger.info("target %s failed verification: %s",
                        report.target.path, report.detail)
    return ok, reports
