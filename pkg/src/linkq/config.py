"""Layered CLI configuration: defaults < config file < environment < flags.

The config file is JSON with sections; environment variables are flat and
prefixed with ``LINKQ_`` (for example ``LINKQ_MODEL_NAME``); flags win over
everything. Precedence is total: a flag beats an env var beats the file.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError

ENV_PREFIX = "LINKQ_"

# Evaluation-mode candidate counts used when no explicit k is configured.
TOOL_USE_K = 50
QA_K = 35


@dataclass
class CliConfig:
    # backend section
    endpoint_url: str = ""
    model_name: str = ""
    api_key_env: str = "LINKQ_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    max_in_flight: int = 4
    temperature: float = 0.7
    top_p: float = 0.8
    repetition_penalty: float = 1.05
    send_repetition_penalty: bool = False
    max_tokens: int = 1024
    # agent section
    k: int | None = None
    max_mentions: int = 8
    templates_dir: str | None = None
    # retrieval section
    search_backend: str = "local"
    index_path: str | None = None
    cache_dir: str | None = None
    # parallelism section
    workers: int | None = None

    def effective_k(self, default: int) -> int:
        """The configured k, else the mode default (50 tool-use, 35 QA)."""
        return self.k if self.k is not None else default

    def effective_workers(self) -> int:
        if self.workers is not None:
            return max(1, self.workers)
        return max(1, min(os.cpu_count() or 1, self.max_in_flight))


_SECTION_OF_FIELD = {
    "endpoint_url": "backend",
    "model_name": "backend",
    "api_key_env": "backend",
    "timeout": "backend",
    "max_retries": "backend",
    "max_in_flight": "backend",
    "temperature": "backend",
    "top_p": "backend",
    "repetition_penalty": "backend",
    "send_repetition_penalty": "backend",
    "max_tokens": "backend",
    "k": "agent",
    "max_mentions": "agent",
    "templates_dir": "agent",
    "search_backend": "retrieval",
    "index_path": "retrieval",
    "cache_dir": "retrieval",
    "workers": "parallelism",
}

def _parse_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {value!r}")


_FIELD_TYPES = {
    "timeout": float,
    "temperature": float,
    "top_p": float,
    "repetition_penalty": float,
    "send_repetition_penalty": _parse_bool,
    "max_retries": int,
    "max_in_flight": int,
    "max_tokens": int,
    "k": int,
    "max_mentions": int,
    "workers": int,
}


def _coerce(name: str, value: Any) -> Any:
    target = _FIELD_TYPES.get(name)
    if target is None or value is None:
        return value
    try:
        return target(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {name!r}: {value!r}") from exc


def _read_config_file(path: str | Path) -> dict[str, Any]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    values: dict[str, Any] = {}
    for name, section in _SECTION_OF_FIELD.items():
        section_obj = raw.get(section)
        if isinstance(section_obj, dict) and name in section_obj:
            values[name] = section_obj[name]
        elif name in raw:  # flat keys also accepted
            values[name] = raw[name]
    unknown = set(raw) - set(_SECTION_OF_FIELD.values()) - set(_SECTION_OF_FIELD)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return values


def load_cli_config(
    config_file: str | Path | None = None,
    env: Mapping[str, str] | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> CliConfig:
    """Merge the three layers into one config object.

    ``overrides`` carries flag values; entries that are None are treated as
    "not given" and do not shadow lower layers.
    """
    env = os.environ if env is None else env
    values: dict[str, Any] = {}

    if config_file is not None:
        for name, value in _read_config_file(config_file).items():
            values[name] = _coerce(name, value)

    for spec in fields(CliConfig):
        env_name = ENV_PREFIX + spec.name.upper()
        if env_name in env:
            values[spec.name] = _coerce(spec.name, env[env_name])

    if overrides:
        for name, value in overrides.items():
            if value is None:
                continue
            if name not in _SECTION_OF_FIELD:
                raise ConfigError(f"unknown config field {name!r}")
            values[name] = _coerce(name, value)

    return CliConfig(**values)
