"""Runtime selection: docker when reachable, host processes otherwise."""

from __future__ import annotations

import logging
import os

from buildpilot.errors import RuntimeUnavailable

logger = logging.getLogger(__name__)

RUNTIME_ENV = "BUILDPILOT_RUNTIME"


def resolve_runtime(name: str = "", env: dict | None = None):
    """Build the requested runtime ("docker", "process", or "auto").

    Explicit argument wins, then the BUILDPILOT_RUNTIME environment variable,
    then auto-detection (docker if a daemon answers, else process).
    """
    env = env if env is not None else os.environ
    choice = (name or env.get(RUNTIME_ENV, "") or "auto").lower()
    if choice == "docker":
        from buildpilot.sandbox.docker_runtime import DockerCliRuntime

        return DockerCliRuntime()
    if choice == "process":
        from buildpilot.sandbox.process_runtime import ProcessRuntime

        return ProcessRuntime()
    if choice == "auto":
        from buildpilot.sandbox.docker_runtime import DockerCliRuntime, docker_available
        from buildpilot.sandbox.process_runtime import ProcessRuntime

        if docker_available():
            logger.info("auto-selected docker runtime")
            return DockerCliRuntime()
        logger.info("docker unavailable; using process runtime")
        return ProcessRuntime()
    raise RuntimeUnavailable(f"unknown runtime {choice!r} (want docker, process, or auto)")
