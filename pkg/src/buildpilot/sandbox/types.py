"""Sandbox configuration and result types."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_IMAGE = "ubuntu:22.04"
DEFAULT_TIMEOUT_SECONDS = 1800.0
DEFAULT_HEAD_BYTES = 4096
DEFAULT_TAIL_BYTES = 8192
DEFAULT_READ_CAP = 24576
DEFAULT_MAX_DEPTH = 4
DEFAULT_MAX_ENTRIES = 800


@dataclass
class SandboxConfig:
    """Everything a runtime needs to create one session.

    mount_source is the host directory holding the repository; it appears in
    the session at mount_target (docker) or is used in place (process).
    privdrop None means "drop privileges iff running as root".
    """

    mount_source: Path
    image: str = DEFAULT_IMAGE
    mount_target: str = ""
    per_command_timeout: float = DEFAULT_TIMEOUT_SECONDS
    kill_grace_seconds: float = 10.0
    output_head_bytes: int = DEFAULT_HEAD_BYTES
    output_tail_bytes: int = DEFAULT_TAIL_BYTES
    network: str = "enabled"
    label: str = ""
    log_path: Path | None = None
    privdrop: bool | None = None

    def __post_init__(self) -> None:
        self.mount_source = Path(self.mount_source)
        if not self.mount_target:
            self.mount_target = f"/workspace/{self.mount_source.name}"
        if self.per_command_timeout <= 0:
            raise ValueError("per_command_timeout must be positive")
        if self.output_head_bytes <= 0 or self.output_tail_bytes <= 0:
            raise ValueError("output caps must be positive")
        if self.network not in ("enabled", "disabled"):
            raise ValueError(f"network must be enabled/disabled, got {self.network!r}")


@dataclass(frozen=True)
class ExecResult:
    """Outcome of one command: exit code plus capped output excerpts."""

    command: str
    exit_code: int
    stdout_excerpt: str
    stderr_excerpt: str
    truncated: bool
    duration_ms: float
    timed_out: bool = False

    @property
    def ok(self) -> bool:
        return self.exit_code == 0


@dataclass(frozen=True)
class FileStat:
    exists: bool
    is_dir: bool = False
    size: int = 0
    mode: int = 0


def truncate_stream(data: bytes, head: int, tail: int) -> tuple[str, bool]:
    """Head+tail excerpt of a byte stream with an omission marker.

    The head slice stays a byte-prefix and the tail slice a byte-suffix of
    the original data, so the full on-disk log always contains both.
    """
    if len(data) <= head + tail:
        return data.decode("utf-8", errors="replace"), False
    omitted = len(data) - head - tail
    return (
        data[:head].decode("utf-8", errors="replace")
        + f"\n…[{omitted} bytes omitted]…\n"
        + data[-tail:].decode("utf-8", errors="replace"),
        True,
    )


def sniff_binary(chunk: bytes, threshold: float = 0.10) -> bool:
    """True when the first bytes look like binary content.

    A NUL byte is decisive (same rule grep and git use). Otherwise more than
    `threshold` of the bytes being control characters (excluding whitespace
    and escape) counts as binary; bytes >= 0x80 are treated as text since
    UTF-8 continuation bytes live there.
    """
    if not chunk:
        return False
    if 0 in chunk:
        return True
    nontext = sum(1 for b in chunk if b < 0x20 and b not in (7, 8, 9, 10, 11, 12, 13, 27))
    nontext += chunk.count(0x7F)
    return nontext / len(chunk) > threshold
