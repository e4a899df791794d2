"""Run configuration: budgets, tool ablation, and the layered config sources.

Values resolve per field as: CLI flag > config file > environment variable >
built-in default. The config file is a flat key = value document with #
comments; model profiles use dotted keys (model.<id>.<field>).
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path

from buildpilot.errors import ConfigError
from buildpilot.gateway.types import ModelProfile, ModelRegistry
from buildpilot.solver.discussion import DiscussionConfig

logger = logging.getLogger(__name__)

TOOL_IDS = (
    "shell",
    "file_navigator",
    "instruction_extractor",
    "website_search",
    "multi_agent_discussion",
)

FIXTURE_MODES = ("live", "record", "replay")

ENV_OPENAI_KEY = "BUILDPILOT_OPENAI_KEY"
ENV_ANTHROPIC_KEY = "BUILDPILOT_ANTHROPIC_KEY"
ENV_SEARCH_KEY = "BUILDPILOT_SEARCH_KEY"
ENV_RUNTIME = "BUILDPILOT_RUNTIME"
ENV_HTTP_PROXY = "BUILDPILOT_HTTP_PROXY"

REPLAY_MODEL_ID = "replay"

DEFAULT_CONFIG_PATH = Path("buildpilot.toml")


def normalize_tool_id(name: str) -> str:
    """Accept hyphenated tool names; reject ids not in TOOL_IDS."""
    tool = name.strip().replace("-", "_").lower()
    if tool not in TOOL_IDS:
        raise ConfigError(f"unknown tool {name!r}; valid: {', '.join(TOOL_IDS)}")
    return tool


@dataclass
class BudgetLimits:
    max_shell_commands: int = 60
    max_self_fix_attempts: int = 2
    max_error_solver_activations: int = 3
    wall_clock_seconds: float = 3600.0
    token_budget: int = 1_500_000

    def __post_init__(self) -> None:
        if self.max_shell_commands < 1:
            raise ValueError("max_shell_commands must be >= 1")
        if self.max_self_fix_attempts < 0:
            raise ValueError("max_self_fix_attempts must be >= 0")
        if self.max_error_solver_activations < 0:
            raise ValueError("max_error_solver_activations must be >= 0")
        if self.wall_clock_seconds <= 0 or self.token_budget <= 0:
            raise ValueError("wall clock and token budget must be positive")


@dataclass
class RunConfig:
    model_id: str = REPLAY_MODEL_ID
    strategy: str = "flow"
    method: str = ""  # benchmark method id; empty means "use strategy"
    image: str = "ubuntu:22.04"
    runtime: str = ""
    network: str = "enabled"
    run_dir: Path = Path("buildpilot-runs")
    label: str = ""
    hermetic: bool = False
    fixture_mode: str = "live"
    fixture_path: Path | None = None
    search_endpoint: str = ""
    search_fixture: Path | None = None
    disabled_tools: frozenset = frozenset()
    budget: BudgetLimits = field(default_factory=BudgetLimits)
    discussion: DiscussionConfig = field(default_factory=DiscussionConfig)

    def __post_init__(self) -> None:
        self.run_dir = Path(self.run_dir)
        if self.fixture_path is not None:
            self.fixture_path = Path(self.fixture_path)
        if self.fixture_mode not in FIXTURE_MODES:
            raise ConfigError(
                f"unknown fixture mode {self.fixture_mode!r}; "
                f"valid: {', '.join(FIXTURE_MODES)}")
        if self.fixture_mode in ("record", "replay") and self.fixture_path is None:
            raise ConfigError(f"{self.fixture_mode} mode requires a fixture path")
        if "shell" in self.disabled_tools:
            raise ConfigError("the shell tool cannot be disabled")
        unknown = set(self.disabled_tools) - set(TOOL_IDS)
        if unknown:
            raise ConfigError(f"unknown tools in disabled set: {sorted(unknown)}")

    @property
    def follow_urls(self) -> bool:
        """Web crawling is off in hermetic runs and under extractor ablation."""
        return not self.hermetic and "instruction_extractor" not in self.disabled_tools

    @property
    def effective_method(self) -> str:
        return self.method or self.strategy


def parse_config_file(path: Path | str) -> dict[str, str]:
    """Flat key=value parser with # comments and optional quoted values."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    values: dict[str, str] = {}
    for lineno, line in enumerate(raw.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = stripped.partition("=")
        key = key.strip()
        value = value.split("#", 1)[0].strip() if not value.strip().startswith(('"', "'")) \
            else value.strip()
        if value[:1] in ('"', "'") and value[-1:] == value[:1] and len(value) >= 2:
            value = value[1:-1]
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        values[key] = value
    return values


def _as_bool(value: str, key: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {value!r}")


def resolve_field(name: str, cli_value, file_values: dict[str, str],
                  default, cast=str, env: dict | None = None):
    """Per-field precedence: CLI flag > config file > env var > default."""
    if cli_value is not None:
        return cli_value
    env = env if env is not None else os.environ
    env_name = f"BUILDPILOT_{name.upper()}"
    if name in file_values:
        raw = file_values[name]
    elif env_name in env:
        raw = env[env_name]
    else:
        return default
    try:
        if cast is bool:
            return _as_bool(str(raw), name)
        return cast(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{name}: bad value {raw!r}: {exc}") from exc


def replay_profile() -> ModelProfile:
    return ModelProfile(
        model_id=REPLAY_MODEL_ID,
        provider="replay",
        input_price_usd_per_mtok=Decimal(0),
        output_price_usd_per_mtok=Decimal(0),
        max_context_tokens=1_000_000,
        supports_tool_calls=True,
    )


def registry_from_config(file_values: dict[str, str]) -> ModelRegistry:
    """Model profiles from dotted config keys, plus the built-in replay model."""
    registry = ModelRegistry([replay_profile()])
    model_ids = sorted({
        key.split(".", 2)[1]
        for key in file_values
        if key.startswith("model.") and key.count(".") >= 2
    })
    for model_id in model_ids:
        def get(field_name: str, default: str = "") -> str:
            return file_values.get(f"model.{model_id}.{field_name}", default)

        provider = get("provider", "openai-compatible")
        try:
            profile = ModelProfile(
                model_id=model_id,
                provider=provider,
                input_price_usd_per_mtok=Decimal(get("input_price", "0")),
                output_price_usd_per_mtok=Decimal(get("output_price", "0")),
                max_context_tokens=int(get("context", "128000")),
                base_url=get("base_url"),
                api_key_env=get("api_key_env"),
                supports_tool_calls=_as_bool(get("tool_calls", "true"), "tool_calls"),
            )
        except (ValueError, InvalidOperation) as exc:
            raise ConfigError(f"model.{model_id}: {exc}") from exc
        registry.add(profile)
    return registry
