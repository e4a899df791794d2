"""buildpilot: agent-driven repo-level compilation with a replayable benchmark harness."""

__version__ = "0.1.0"
