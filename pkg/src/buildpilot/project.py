"""Project description shared by the CLI, orchestrator, and benchmark."""

from __future__ import annotations

from dataclasses import dataclass

TARGET_KINDS = ("executable", "static_lib", "shared_lib", "object")

TOPICS = (
    "Audio",
    "Compression",
    "Crypto",
    "Database",
    "DataProcessing",
    "Embedded",
    "HPC",
    "Image",
    "Linux",
    "Networking",
    "NN",
    "Programming",
    "Security",
    "Terminal",
)

GUIDE_CATEGORIES = ("in_repo", "not_in_repo", "no_guide")


@dataclass(frozen=True)
class Target:
    """One build artifact to verify, repo-relative."""

    path: str
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in TARGET_KINDS:
            raise ValueError(f"unknown target kind {self.kind!r}")
        if not self.path or self.path.startswith("/"):
            raise ValueError("target path must be repo-relative")
        if ".." in self.path.split("/"):
            raise ValueError("target path must not traverse upward")


@dataclass(frozen=True)
class ProjectSpec:
    """A repository to compile: source, pin, and what success looks like."""

    name: str
    repo_url: str
    revision: str = ""
    topic: str = ""
    guide_category: str = ""
    expected_targets: tuple[Target, ...] = ()
    timeout_override: float | None = None

    def __post_init__(self) -> None:
        if not self.name:
            raise ValueError("project name must be non-empty")
        if not self.repo_url:
            raise ValueError("project repo_url must be non-empty")
        if self.topic and self.topic not in TOPICS:
            raise ValueError(f"unknown topic {self.topic!r}")
        if self.guide_category and self.guide_category not in GUIDE_CATEGORIES:
            raise ValueError(f"unknown guide category {self.guide_category!r}")
