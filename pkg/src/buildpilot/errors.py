"""Exception types shared across the package.

Every error raised by buildpilot's own logic derives from BuildPilotError so
callers can catch the whole family without swallowing genuine bugs
(TypeError, KeyError, ...).
"""

from __future__ import annotations


class BuildPilotError(Exception):
    """Base class for all buildpilot failures."""


# --- model gateway ---------------------------------------------------------


class UnknownModel(BuildPilotError):
    """Requested model id is not in the registry (or cannot embed)."""


class AuthFailure(BuildPilotError):
    """Provider rejected our credentials (HTTP 401/403 or missing key)."""


class TransportExhausted(BuildPilotError):
    """Transient transport failures persisted through every retry."""


class ContextOverflow(BuildPilotError):
    """Estimated prompt size exceeds the model's context window."""


class FixtureMiss(BuildPilotError):
    """Replay archive has no recording for this call (or is absent entirely)."""

    def __init__(self, tag: str = "", seq: int = 0, prompt_digest: str = "",
                 message: str = ""):
        self.tag = tag
        self.seq = seq
        self.prompt_digest = prompt_digest
        super().__init__(
            message
            or f"no recorded response for tag={tag!r} seq={seq}"
            + (f" digest={prompt_digest[:12]}" if prompt_digest else "")
        )


class CorruptFixture(BuildPilotError):
    """Replay archive exists but cannot be parsed or fails validation."""


# --- sandbox ----------------------------------------------------------------


class RuntimeUnavailable(BuildPilotError):
    """No usable container/process runtime on this host."""


class ImagePullFailure(BuildPilotError):
    """Container image could not be pulled or found."""


class MountFailure(BuildPilotError):
    """Source directory for the workspace mount is missing or unusable."""


class SessionDead(BuildPilotError):
    """Operation attempted on a destroyed or crashed session."""


class ConcurrentExec(BuildPilotError):
    """A second exec was issued while one is still running in the session."""


class FileNotFound(BuildPilotError):
    """Requested path does not exist inside the sandbox workspace."""


class BinaryFile(BuildPilotError):
    """Refusing to return file content that sniffs as binary."""


# --- navigation / extraction -----------------------------------------------


class NoCandidate(BuildPilotError):
    """Navigator found no plausible build-guide files."""


class FetchFailure(BuildPilotError):
    """HTTP fetch failed after retry (network, status, or size cap)."""


class NotText(BuildPilotError):
    """Fetched URL did not return a text-like content type."""


class ExtractionFailure(BuildPilotError):
    """No usable build commands could be extracted from the source files."""


# --- error solving ----------------------------------------------------------


class AllAgentsMalformed(BuildPilotError):
    """Every discussion agent failed to produce a parseable solution."""


class SearchUnavailable(BuildPilotError):
    """No web-search backend is configured or the backend is down."""


class NoResults(BuildPilotError):
    """Search backend answered but returned zero results."""


# --- orchestration ----------------------------------------------------------


class UnknownStrategy(BuildPilotError):
    """Strategy name is not registered."""


class ProviderLacksToolCalling(BuildPilotError):
    """The 'toolcall' strategy needs native tool-call support."""


class NoRuleMatched(BuildPilotError):
    """Rule-table baseline found no recognized build system at repo root."""


class NoCandidateFiles(BuildPilotError):
    """Baseline found nothing to index or summarize in the repository."""


# --- benchmark --------------------------------------------------------------


class ManifestError(BuildPilotError):
    """Base for benchmark manifest problems."""


class ParseError(ManifestError):
    """Manifest line is not valid JSON."""


class SchemaViolation(ManifestError):
    """Manifest record is missing fields or has values out of range."""


class RatioViolation(ManifestError):
    """Manifest does not match the required 7:2:1 category split."""


class MixedManifest(ManifestError):
    """Aggregated run records come from more than one manifest."""


# --- cli / config -----------------------------------------------------------


class ConfigError(BuildPilotError):
    """Config file or flag combination is invalid."""
