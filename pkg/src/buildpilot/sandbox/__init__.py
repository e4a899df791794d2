"""Isolated execution sessions for untrusted build commands.

Two interchangeable backends: `docker` (one container per session, commands
via docker exec) and `process` (host-side process groups with privilege drop
when running as root). Both enforce the same contract: per-command timeouts
with process-tree kill, cd/export persistence across exec calls, capped
output excerpts with full logs on disk, and read helpers that refuse binary
content.
"""

from buildpilot.sandbox.base import Session
from buildpilot.sandbox.process_runtime import ProcessRuntime
from buildpilot.sandbox.docker_runtime import DockerCliRuntime
from buildpilot.sandbox.runtime import resolve_runtime
from buildpilot.sandbox.types import ExecResult, FileStat, SandboxConfig

__all__ = [
    "DockerCliRuntime",
    "ExecResult",
    "FileStat",
    "ProcessRuntime",
    "SandboxConfig",
    "Session",
    "resolve_runtime",
]
