"""Host-process sandbox backend.

Each command runs as its own process group via ``bash -c`` with a wrapper
that restores and re-dumps the session's cwd and exported environment, so
``cd`` and ``export`` persist across exec calls exactly as they would in a
long-lived shell. Timeouts kill the whole group (SIGTERM, a grace period,
then SIGKILL) and report exit code 124.

When running as root the command is re-executed under an unprivileged
uid/gid (65534), so builds cannot write outside directories the session
owns. Network isolation under `network: disabled` is best effort (clone into
a fresh network namespace when permitted).
"""

from __future__ import annotations

import logging
import os
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from pathlib import Path

from buildpilot.errors import MountFailure, RuntimeUnavailable
from buildpilot.sandbox.base import Session, SessionRegistry
from buildpilot.sandbox.types import (
    ExecResult,
    FileStat,
    SandboxConfig,
    truncate_stream,
)

logger = logging.getLogger(__name__)

SANDBOX_UID = 65534
SANDBOX_GID = 65534

# Ancestor directories given o+x so the sandbox uid can traverse into the
# workspace; refcounted because parallel sessions share ancestors.
_traversal_lock = threading.Lock()
_traversal_grants: dict[str, list] = {}


def _grant_traversal(workdir: str) -> list[str]:
    granted: list[str] = []
    with _traversal_lock:
        for parent in Path(workdir).parents:
            path = str(parent)
            if path == "/":
                break
            entry = _traversal_grants.get(path)
            if entry is not None:
                entry[1] += 1
                granted.append(path)
                continue
            try:
                mode = os.stat(path).st_mode & 0o7777
            except OSError:
                continue
            if mode & 0o001:
                continue
            os.chmod(path, mode | 0o001)
            _traversal_grants[path] = [mode, 1]
            granted.append(path)
    return granted


def _release_traversal(granted: list[str]) -> None:
    with _traversal_lock:
        for path in granted:
            entry = _traversal_grants.get(path)
            if entry is None:
                continue
            entry[1] -= 1
            if entry[1] <= 0:
                del _traversal_grants[path]
                try:
                    os.chmod(path, entry[0])
                except OSError:
                    pass

# Runs before the user's command when privileges are dropped: give up root,
# optionally detach from the network, then become bash.
_DROP_SHIM = """
import ctypes, os, sys
if sys.argv[1] == "1":
    try:
        ctypes.CDLL(None, use_errno=True).unshare(0x40000000)
    except Exception:
        pass
os.setgroups([])
os.setgid(int(sys.argv[2]))
os.setuid(int(sys.argv[3]))
os.execvp(sys.argv[4], sys.argv[4:])
"""


def _default_env(home: Path, tmp: Path) -> dict[str, str]:
    return {
        "PATH": "/usr/local/sbin:/usr/local/bin:/usr/sbin:/usr/bin:/sbin:/bin",
        "HOME": str(home),
        "TMPDIR": str(tmp),
        "LANG": "C.UTF-8",
        "LC_ALL": "C.UTF-8",
        "DEBIAN_FRONTEND": "noninteractive",
    }


class ProcessSession(Session):
    def __init__(self, config: SandboxConfig, runtime=None):
        super().__init__(config, runtime)
        source = config.mount_source
        if not source.is_dir():
            raise MountFailure(f"mount source {source} is not a directory")
        self.workdir = str(source.resolve())
        self.container_id = f"proc-{self.session_id}"
        self._scratch = Path(tempfile.mkdtemp(prefix=f"buildpilot-{self.session_id}-"))
        self._home = self._scratch / "home"
        self._tmp = self._scratch / "tmp"
        self._home.mkdir()
        self._tmp.mkdir()
        self._cwd_file = self._scratch / "cwd"
        self._env_file = self._scratch / "env"
        self._cwd_file.write_text(self.workdir + "\n", encoding="utf-8")
        self._env_file.write_text("", encoding="utf-8")
        self._drop = config.privdrop if config.privdrop is not None else os.geteuid() == 0
        if self._drop and os.geteuid() != 0:
            raise RuntimeUnavailable("privilege drop requested but not running as root")
        self._granted: list[str] = []
        if self._drop:
            self._chown_tree(self._scratch)
            self._chown_tree(source)
            self._granted = _grant_traversal(self.workdir)
        log_path = config.log_path or (self._scratch / "shell.log")
        log_path.parent.mkdir(parents=True, exist_ok=True)
        self.log_path = log_path
        self._log = open(log_path, "ab")
        self._proc: subprocess.Popen | None = None

    @staticmethod
    def _chown_tree(root: Path) -> None:
        os.chown(root, SANDBOX_UID, SANDBOX_GID)
        for dirpath, dirnames, filenames in os.walk(root):
            for name in dirnames + filenames:
                path = os.path.join(dirpath, name)
                if not os.path.islink(path):
                    os.chown(path, SANDBOX_UID, SANDBOX_GID)

    def _wrapper(self, command: str) -> str:
        cwd_q = shlex.quote(str(self._cwd_file))
        env_q = shlex.quote(str(self._env_file))
        work_q = shlex.quote(self.workdir)
        return (
            f'cd "$(cat {cwd_q} 2>/dev/null)" 2>/dev/null || cd {work_q}\n'
            f"[ -s {env_q} ] && . {env_q}\n"
            f"{command}\n"
            f"__bp_rc=$?\n"
            f"pwd > {cwd_q}\n"
            f"export -p > {env_q}\n"
            f"exit $__bp_rc\n"
        )

    def _argv(self, command: str) -> list[str]:
        bash_argv = ["bash", "-c", self._wrapper(command)]
        if not self._drop:
            return bash_argv
        net_flag = "1" if self.config.network == "disabled" else "0"
        return [
            sys.executable, "-c", _DROP_SHIM,
            net_flag, str(SANDBOX_GID), str(SANDBOX_UID), *bash_argv,
        ]

    def _run(self, command: str, timeout: float) -> ExecResult:
        started = time.monotonic()
        proc = subprocess.Popen(
            self._argv(command),
            stdin=subprocess.DEVNULL,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            cwd=self.workdir,
            env=_default_env(self._home, self._tmp),
            start_new_session=True,
        )
        self._proc = proc
        timed_out = False
        try:
            out, err = proc.communicate(timeout=timeout)
            exit_code = proc.returncode
        except subprocess.TimeoutExpired:
            timed_out = True
            out, err = self._kill_group(proc)
            exit_code = 124
        finally:
            self._proc = None
        duration_ms = (time.monotonic() - started) * 1000.0
        self._append_log(command, out, err, exit_code, duration_ms, timed_out)
        head, tail = self.config.output_head_bytes, self.config.output_tail_bytes
        stdout_excerpt, trunc_out = truncate_stream(out, head, tail)
        stderr_excerpt, trunc_err = truncate_stream(err, head, tail)
        return ExecResult(
            command=command,
            exit_code=exit_code,
            stdout_excerpt=stdout_excerpt,
            stderr_excerpt=stderr_excerpt,
            truncated=trunc_out or trunc_err,
            duration_ms=duration_ms,
            timed_out=timed_out,
        )

    def _kill_group(self, proc: subprocess.Popen) -> tuple[bytes, bytes]:
        self._signal_group(proc.pid, signal.SIGTERM)
        try:
            return proc.communicate(timeout=self.config.kill_grace_seconds)
        except subprocess.TimeoutExpired:
            self._signal_group(proc.pid, signal.SIGKILL)
            return proc.communicate()

    @staticmethod
    def _signal_group(pid: int, sig: int) -> None:
        try:
            os.killpg(pid, sig)
        except ProcessLookupError:
            pass

    def _append_log(self, command: str, out: bytes, err: bytes,
                    exit_code: int, duration_ms: float, timed_out: bool) -> None:
        note = " (timed out)" if timed_out else ""
        self._log.write(f"$ {command}\n--- stdout ---\n".encode())
        self._log.write(out)
        self._log.write(b"\n--- stderr ---\n")
        self._log.write(err)
        self._log.write(f"\n--- exit {exit_code} after {duration_ms:.0f} ms{note} ---\n\n".encode())
        self._log.flush()

    # --- IO primitives ---------------------------------------------------

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.workdir) / p

    def _stat(self, path: str) -> FileStat:
        target = self._resolve(path)
        try:
            st = target.stat()
        except OSError:
            return FileStat(exists=False)
        return FileStat(exists=True, is_dir=target.is_dir(), size=st.st_size,
                        mode=st.st_mode & 0o7777)

    def _read_bytes(self, path: str, max_bytes: int) -> bytes:
        with open(self._resolve(path), "rb") as fh:
            return fh.read(max_bytes)

    def _list_entries(self, max_depth: int) -> tuple[list[tuple[str, bool]], bool]:
        root = Path(self.workdir)
        entries: list[tuple[str, bool]] = []
        deeper = False
        for dirpath, dirnames, filenames in os.walk(root):
            dirnames[:] = sorted(d for d in dirnames if d != ".git")
            rel = os.path.relpath(dirpath, root)
            depth = 0 if rel == "." else rel.count(os.sep) + 1
            if depth >= max_depth:
                if dirnames or filenames:
                    deeper = True
                dirnames[:] = []
                continue
            prefix = "" if rel == "." else rel.replace(os.sep, "/") + "/"
            for name in dirnames:
                entries.append((prefix + name, True))
            for name in sorted(filenames):
                entries.append((prefix + name, False))
        return entries, deeper

    def _teardown(self) -> None:
        proc = self._proc
        if proc is not None and proc.poll() is None:
            self._signal_group(proc.pid, signal.SIGKILL)
        _release_traversal(self._granted)
        self._log.close()
        keep_log = self.config.log_path is not None
        if keep_log:
            shutil.rmtree(self._scratch, ignore_errors=True)
        else:
            # no external log destination: keep only shell.log in scratch
            for child in self._scratch.iterdir():
                if child != self.log_path:
                    if child.is_dir():
                        shutil.rmtree(child, ignore_errors=True)
                    else:
                        child.unlink(missing_ok=True)


class ProcessRuntime:
    """Creates ProcessSession instances and tracks them for leak checks."""

    name = "process"

    def __init__(self) -> None:
        self.registry = SessionRegistry()

    def create_session(self, config: SandboxConfig) -> ProcessSession:
        session = ProcessSession(config, runtime=self)
        self.registry.register(session)
        logger.info("process session %s on %s", session.session_id, session.workdir)
        return session

    def list_sessions(self, label: str | None = None) -> list[Session]:
        return self.registry.active(label)

    def peak_sessions(self, label: str = "") -> int:
        return self.registry.peak(label)

    def _deregister(self, session: Session) -> None:
        self.registry.deregister(session)
