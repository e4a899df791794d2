"""Docker CLI sandbox backend: one long-lived container per session.

Commands go through ``docker exec`` with the same cwd/env state-file wrapper
the process backend uses, and per-command timeouts via coreutils timeout
inside the container (exit 124, SIGKILL after the grace period). Requires a
reachable docker daemon; creation fails with RuntimeUnavailable otherwise.
"""

from __future__ import annotations

import base64
import logging
import shlex
import subprocess
import time
from pathlib import Path

from buildpilot.errors import (
    ImagePullFailure,
    MountFailure,
    RuntimeUnavailable,
)
from buildpilot.sandbox.base import Session, SessionRegistry
from buildpilot.sandbox.types import ExecResult, FileStat, SandboxConfig, truncate_stream

logger = logging.getLogger(__name__)

_STATE_DIR = "/tmp/.buildpilot"
_CLIENT_SLACK = 60.0


def _docker(args: list[str], timeout: float = 60.0) -> subprocess.CompletedProcess:
    return subprocess.run(
        ["docker", *args], capture_output=True, timeout=timeout
    )


def docker_available() -> bool:
    import shutil as _sh

    if _sh.which("docker") is None:
        return False
    try:
        return _docker(["info", "--format", "{{.ServerVersion}}"], timeout=10).returncode == 0
    except (subprocess.TimeoutExpired, OSError):
        return False


class DockerSession(Session):
    def __init__(self, config: SandboxConfig, runtime=None):
        super().__init__(config, runtime)
        source = config.mount_source
        if not source.is_dir():
            raise MountFailure(f"mount source {source} is not a directory")
        args = [
            "run", "-d", "--rm",
            "--label", "buildpilot=1",
            "--label", f"buildpilot.run={config.label}",
            "-v", f"{source.resolve()}:{config.mount_target}",
            "-w", config.mount_target,
        ]
        if config.network == "disabled":
            args += ["--network", "none"]
        args += [config.image, "sleep", "infinity"]
        proc = _docker(args, timeout=600)
        if proc.returncode != 0:
            stderr = proc.stderr.decode("utf-8", errors="replace")
            lowered = stderr.lower()
            if "pull access denied" in lowered or "manifest" in lowered or \
                    "unable to find image" in lowered:
                raise ImagePullFailure(stderr.strip()[:500])
            if "mount" in lowered or "no such file or directory" in lowered:
                raise MountFailure(stderr.strip()[:500])
            raise RuntimeUnavailable(stderr.strip()[:500])
        self.container_id = proc.stdout.decode().strip()
        self.workdir = config.mount_target
        log_path = config.log_path or Path(f"/tmp/buildpilot-{self.session_id}.log")
        log_path.parent.mkdir(parents=True, exist_ok=True)
        self.log_path = log_path
        self._log = open(log_path, "ab")
        init = (
            f"mkdir -p {_STATE_DIR} && "
            f"printf '%s\\n' {shlex.quote(config.mount_target)} > {_STATE_DIR}/cwd && "
            f": > {_STATE_DIR}/env"
        )
        setup = _docker(["exec", self.container_id, "sh", "-c", init])
        if setup.returncode != 0:
            raise RuntimeUnavailable(
                "session bootstrap failed: " + setup.stderr.decode(errors="replace")[:300]
            )

    def _wrapper(self, command: str) -> str:
        work_q = shlex.quote(self.workdir)
        return (
            f'cd "$(cat {_STATE_DIR}/cwd 2>/dev/null)" 2>/dev/null || cd {work_q}\n'
            f"[ -s {_STATE_DIR}/env ] && . {_STATE_DIR}/env\n"
            f"{command}\n"
            f"__bp_rc=$?\n"
            f"pwd > {_STATE_DIR}/cwd\n"
            f"export -p > {_STATE_DIR}/env\n"
            f"exit $__bp_rc\n"
        )

    def _run(self, command: str, timeout: float) -> ExecResult:
        grace = self.config.kill_grace_seconds
        inner = (
            f"timeout -k {grace:.0f} {timeout:.0f} "
            f"bash -c {shlex.quote(self._wrapper(command))}"
        )
        started = time.monotonic()
        try:
            proc = _docker(["exec", self.container_id, "sh", "-c", inner],
                           timeout=timeout + grace + _CLIENT_SLACK)
            out, err, exit_code = proc.stdout, proc.stderr, proc.returncode
        except subprocess.TimeoutExpired as exc:
            out = exc.stdout or b""
            err = exc.stderr or b""
            exit_code = 124
        duration_ms = (time.monotonic() - started) * 1000.0
        timed_out = exit_code == 124
        note = " (timed out)" if timed_out else ""
        self._log.write(f"$ {command}\n--- stdout ---\n".encode())
        self._log.write(out)
        self._log.write(b"\n--- stderr ---\n")
        self._log.write(err)
        self._log.write(f"\n--- exit {exit_code} after {duration_ms:.0f} ms{note} ---\n\n".encode())
        self._log.flush()
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

    def _container_path(self, path: str) -> str:
        if path.startswith("/"):
            return path
        return f"{self.workdir.rstrip('/')}/{path}"

    def _stat(self, path: str) -> FileStat:
        target = shlex.quote(self._container_path(path))
        proc = _docker(["exec", self.container_id, "sh", "-c",
                        f"stat -c '%F|%s|%a' -- {target}"])
        if proc.returncode != 0:
            return FileStat(exists=False)
        kind, size, mode = proc.stdout.decode().strip().split("|")
        return FileStat(exists=True, is_dir=kind == "directory",
                        size=int(size), mode=int(mode, 8))

    def _read_bytes(self, path: str, max_bytes: int) -> bytes:
        target = shlex.quote(self._container_path(path))
        proc = _docker(["exec", self.container_id, "sh", "-c",
                        f"head -c {max_bytes} -- {target} | base64"])
        if proc.returncode != 0:
            from buildpilot.errors import FileNotFound

            raise FileNotFound(f"{path!r} could not be read in the container")
        return base64.b64decode(proc.stdout)

    def _list_entries(self, max_depth: int) -> tuple[list[tuple[str, bool]], bool]:
        work_q = shlex.quote(self.workdir)
        cmd = (
            f"find {work_q} -mindepth 1 -maxdepth {max_depth + 1} "
            f"-name .git -prune -o -printf '%y %P\\n'"
        )
        proc = _docker(["exec", self.container_id, "sh", "-c", cmd], timeout=120)
        entries: list[tuple[str, bool]] = []
        deeper = False
        for line in proc.stdout.decode("utf-8", errors="replace").splitlines():
            if len(line) < 3:
                continue
            kind, rel = line[0], line[2:]
            if not rel or rel.split("/")[0] == ".git":
                continue
            if rel.count("/") + 1 > max_depth:
                deeper = True
                continue
            entries.append((rel, kind == "d"))
        return entries, deeper

    def _teardown(self) -> None:
        self._log.close()
        try:
            _docker(["rm", "-f", self.container_id], timeout=60)
        except (subprocess.TimeoutExpired, OSError):
            logger.warning("failed to remove container %s", self.container_id)


class DockerCliRuntime:
    """Creates docker-backed sessions; requires a reachable daemon."""

    name = "docker"

    def __init__(self) -> None:
        if not docker_available():
            raise RuntimeUnavailable("docker CLI missing or daemon unreachable")
        self.registry = SessionRegistry()

    def create_session(self, config: SandboxConfig) -> DockerSession:
        session = DockerSession(config, runtime=self)
        self.registry.register(session)
        logger.info("docker session %s in %s", session.session_id, session.container_id[:12])
        return session

    def list_sessions(self, label: str | None = None) -> list[Session]:
        return self.registry.active(label)

    def peak_sessions(self, label: str = "") -> int:
        return self.registry.peak(label)

    def _deregister(self, session: Session) -> None:
        self.registry.deregister(session)
