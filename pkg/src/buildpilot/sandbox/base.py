"""Session base class: shared read/list logic over backend primitives."""

from __future__ import annotations

import logging
import threading
import time
import uuid
from pathlib import Path

from buildpilot.errors import BinaryFile, FileNotFound, SessionDead
from buildpilot.sandbox.listing import render_tree
from buildpilot.sandbox.types import (
    DEFAULT_MAX_DEPTH,
    DEFAULT_MAX_ENTRIES,
    DEFAULT_READ_CAP,
    ExecResult,
    FileStat,
    SandboxConfig,
    sniff_binary,
)

logger = logging.getLogger(__name__)

TRUNCATION_MARKER = "\n…[truncated]…"


class Session:
    """One isolated workspace. Subclasses provide the exec/IO primitives."""

    def __init__(self, config: SandboxConfig, runtime=None):
        self.config = config
        self.runtime = runtime
        self.session_id = uuid.uuid4().hex[:12]
        self.container_id = ""
        self.workdir = config.mount_target
        self.created_at = time.time()
        self.alive = True
        self._exec_lock = threading.Lock()

    # --- backend primitives (override) ---------------------------------

    def _run(self, command: str, timeout: float) -> ExecResult:
        raise NotImplementedError

    def _stat(self, path: str) -> FileStat:
        raise NotImplementedError

    def _read_bytes(self, path: str, max_bytes: int) -> bytes:
        raise NotImplementedError

    def _list_entries(self, max_depth: int) -> tuple[list[tuple[str, bool]], bool]:
        """All (relpath, is_dir) under the workspace up to max_depth,
        .git excluded, plus a flag for whether deeper content exists."""
        raise NotImplementedError

    def _teardown(self) -> None:
        raise NotImplementedError

    # --- public API ------------------------------------------------------

    def exec(self, command: str, timeout: float | None = None) -> ExecResult:
        self._check_alive()
        if not self._exec_lock.acquire(blocking=False):
            from buildpilot.errors import ConcurrentExec

            raise ConcurrentExec(f"session {self.session_id} already has a command running")
        try:
            effective = timeout if timeout is not None else self.config.per_command_timeout
            result = self._run(command, effective)
            logger.debug("exec [%s] rc=%d %.0fms: %s",
                         self.session_id, result.exit_code, result.duration_ms, command)
            return result
        finally:
            self._exec_lock.release()

    def fetch_structure(self, max_depth: int = DEFAULT_MAX_DEPTH,
                        max_entries: int = DEFAULT_MAX_ENTRIES) -> str:
        self._check_alive()
        entries, depth_capped = self._list_entries(max_depth)
        return render_tree(self.workdir, entries, max_entries=max_entries,
                           depth_capped=depth_capped)

    def read_file(self, path: str, max_bytes: int = DEFAULT_READ_CAP) -> str:
        self._check_alive()
        stat = self._stat(path)
        if not stat.exists or stat.is_dir:
            raise FileNotFound(f"{path!r} does not exist in the workspace")
        head = self._read_bytes(path, 4096)
        if sniff_binary(head):
            raise BinaryFile(f"{path!r} looks binary; refusing to return content")
        data = self._read_bytes(path, max_bytes)
        text = data.decode("utf-8", errors="replace")
        if stat.size > max_bytes:
            text += TRUNCATION_MARKER
        return text

    def read_bytes(self, path: str, max_bytes: int) -> bytes:
        """Raw prefix of a file; used by target verification on binaries."""
        self._check_alive()
        stat = self._stat(path)
        if not stat.exists or stat.is_dir:
            raise FileNotFound(f"{path!r} does not exist in the workspace")
        return self._read_bytes(path, max_bytes)

    def stat(self, path: str) -> FileStat:
        self._check_alive()
        return self._stat(path)

    def destroy(self) -> None:
        if not self.alive:
            return
        self.alive = False
        try:
            self._teardown()
        finally:
            if self.runtime is not None:
                self.runtime._deregister(self)
        logger.debug("session %s destroyed", self.session_id)

    def _check_alive(self) -> None:
        if not self.alive:
            raise SessionDead(f"session {self.session_id} was destroyed")

    def __enter__(self) -> "Session":
        return self

    def __exit__(self, *exc) -> None:
        self.destroy()


class SessionRegistry:
    """Tracks live sessions per runtime, with per-label peaks for leak checks."""

    def __init__(self) -> None:
        self._sessions: dict[str, Session] = {}
        self._peaks: dict[str, int] = {}
        self._lock = threading.Lock()

    def register(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.session_id] = session
            label = session.config.label
            live = sum(1 for s in self._sessions.values() if s.config.label == label)
            self._peaks[label] = max(self._peaks.get(label, 0), live)

    def deregister(self, session: Session) -> None:
        with self._lock:
            self._sessions.pop(session.session_id, None)

    def active(self, label: str | None = None) -> list[Session]:
        with self._lock:
            sessions = list(self._sessions.values())
        if label is None:
            return sessions
        return [s for s in sessions if s.config.label == label]

    def peak(self, label: str = "") -> int:
        with self._lock:
            return self._peaks.get(label, 0)
