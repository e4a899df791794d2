"""Gateway assembly for the three run modes: live, record, and replay.

Credentials are checked eagerly for the requested model so a missing key
fails the invocation up front instead of surfacing mid-run as a generic
session failure.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from pathlib import Path

from buildpilot.errors import AuthFailure, ConfigError
from buildpilot.gateway.ledger import UsageLedger
from buildpilot.gateway.providers import AnthropicCompatProvider, OpenAICompatProvider
from buildpilot.gateway.replay import (
    ArchiveWriter,
    RecordingProvider,
    ReplayArchive,
    ReplayProvider,
)
from buildpilot.gateway.service import Gateway
from buildpilot.gateway.types import ModelProfile, ModelRegistry

logger = logging.getLogger(__name__)


@dataclass
class GatewayBundle:
    """A gateway plus the pieces the caller must keep hold of.

    The ledger is the same object the gateway records into; the writer is
    set only in record mode and must be flushed once the run is over.
    """

    gateway: Gateway
    ledger: UsageLedger
    writer: ArchiveWriter | None = None

    def flush(self) -> None:
        if self.writer is not None:
            self.writer.flush()


def live_resolver(env: dict | None = None):
    """Provider per profile, keyed to the provider kind and env credentials."""
    env = env if env is not None else os.environ
    cache: dict[str, object] = {}

    def resolve(profile: ModelProfile):
        provider = cache.get(profile.model_id)
        if provider is not None:
            return provider
        check_live_credentials(profile, env)
        key = env.get(profile.api_key_env, "")
        if profile.provider == "openai-compatible":
            provider = OpenAICompatProvider(profile.base_url, key)
        else:
            provider = AnthropicCompatProvider(profile.base_url, key)
        cache[profile.model_id] = provider
        return provider

    return resolve


def check_live_credentials(profile: ModelProfile, env: dict | None = None) -> None:
    """Raise before any network call if this profile cannot go live."""
    env = env if env is not None else os.environ
    if profile.provider == "replay":
        raise ConfigError(
            f"model {profile.model_id!r} is the offline replay model; "
            "live and record modes need a real provider")
    if not profile.base_url:
        raise ConfigError(f"model {profile.model_id!r} has no base_url configured")
    if not profile.api_key_env:
        raise AuthFailure(
            f"model {profile.model_id!r} has no api_key_env configured")
    if not env.get(profile.api_key_env):
        raise AuthFailure(
            f"model {profile.model_id!r}: environment variable "
            f"{profile.api_key_env} is not set")


def replay_resolver(archive_dir: Path | str, namespace: str = ""):
    """Every profile resolves to one shared replay provider (shared cursors)."""
    archive = ReplayArchive.load(archive_dir)
    provider = ReplayProvider(archive, namespace=namespace)
    return lambda profile: provider


def recording_resolver(inner, writer: ArchiveWriter, namespace: str = ""):
    cache: dict[int, RecordingProvider] = {}

    def resolve(profile: ModelProfile):
        raw = inner(profile)
        wrapped = cache.get(id(raw))
        if wrapped is None:
            wrapped = RecordingProvider(raw, writer, namespace=namespace)
            cache[id(raw)] = wrapped
        return wrapped

    return resolve


def build_gateway(
    config,
    registry: ModelRegistry,
    model_id: str = "",
    archive_dir: Path | str | None = None,
    namespace: str = "",
    env: dict | None = None,
) -> GatewayBundle:
    """Fresh ledger plus a gateway wired for config.fixture_mode.

    archive_dir overrides config.fixture_path, letting a benchmark point
    each cell at its own corner of a fixture tree.
    """
    model_id = model_id or config.model_id
    profile = registry.get(model_id)
    base = archive_dir if archive_dir is not None else config.fixture_path
    ledger = UsageLedger()
    writer = None

    mode = config.fixture_mode
    if mode == "replay":
        if base is None:
            raise ConfigError("replay mode requires a fixture path")
        resolver = replay_resolver(base, namespace=namespace)
    elif mode == "record":
        if base is None:
            raise ConfigError("record mode requires a fixture path")
        check_live_credentials(profile, env)
        writer = ArchiveWriter(Path(base), meta={"model_id": model_id})
        resolver = recording_resolver(live_resolver(env), writer,
                                      namespace=namespace)
    else:
        check_live_credentials(profile, env)
        resolver = live_resolver(env)

    return GatewayBundle(gateway=Gateway(registry, ledger, resolver),
                         ledger=ledger, writer=writer)
