"""Repository acquisition: local copy or git clone into the run workspace."""

from __future__ import annotations

import logging
import shutil
import subprocess
from pathlib import Path

from buildpilot.project import ProjectSpec

logger = logging.getLogger(__name__)

# Manifest sentinel for "no pinned revision": checkout is skipped.
NULL_REVISION = "0" * 40

CLONE_TIMEOUT = 600.0


class AcquisitionError(Exception):
    pass


def _is_remote(repo: str) -> bool:
    return (repo.startswith(("http://", "https://", "git://", "ssh://", "git@"))
            or repo.endswith(".git"))


def acquire_repo(project: ProjectSpec, dest_root: Path) -> Path:
    """Materialize the project working tree under dest_root/<name>.

    Local directories are copied (minus .git) so the run can never dirty the
    source; remote URLs are cloned and pinned to the manifest revision.
    """
    dest_root = Path(dest_root)
    dest_root.mkdir(parents=True, exist_ok=True)
    workdir = dest_root / project.name
    if workdir.exists():
        shutil.rmtree(workdir)

    if not _is_remote(project.repo_url):
        source = Path(project.repo_url)
        if not source.is_dir():
            raise AcquisitionError(f"local repo {source} is not a directory")
        shutil.copytree(source, workdir,
                        ignore=shutil.ignore_patterns(".git"))
        logger.info("copied %s -> %s", source, workdir)
        return workdir

    try:
        subprocess.run(
            ["git", "clone", "--quiet", project.repo_url, str(workdir)],
            check=True, capture_output=True, text=True, timeout=CLONE_TIMEOUT)
    except FileNotFoundError as exc:
        raise AcquisitionError("git is not installed") from exc
    except subprocess.TimeoutExpired as exc:
        raise AcquisitionError(f"clone of {project.repo_url} timed out") from exc
    except subprocess.CalledProcessError as exc:
        raise AcquisitionError(
            f"clone of {project.repo_url} failed: {exc.stderr.strip()}") from exc

    revision = project.revision.strip()
    if revision and revision != NULL_REVISION:
        try:
            subprocess.run(
                ["git", "-C", str(workdir), "checkout", "--quiet", revision],
                check=True, capture_output=True, text=True, timeout=120)
        except subprocess.CalledProcessError as exc:
            raise AcquisitionError(
                f"checkout of {revision} failed: {exc.stderr.strip()}") from exc
    logger.info("cloned %s at %s", project.repo_url, revision or "HEAD")
    return workdir
