"""
Configuration loading and logging setup.

The effective configuration is built from the model defaults, then a config
file, then command-line overrides. Config files are either JSON with one
object per section (see config.json) or flat `key = value` text where keys
are dotted (`sde.nu`) or bare field names that are unique across sections,
and lists are comma separated.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .errors import ConfigError
from .models import DepauwField, SdeConfig

logger = logging.getLogger(__name__)

DEFAULT_LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class ExperimentSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = "depauw-zero-noise"
    output_dir: str = "outputs"


class FieldSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    horizon: float = Field(default=1.0, gt=0)
    max_depth: int = Field(default=12, ge=0, le=60)
    speed_scale: float = Field(default=1.0, gt=0)
    zero_drift: bool = False
    cutoff: float | None = Field(default=None, ge=0)

    def build(self) -> DepauwField:
        return DepauwField(**self.model_dump())


class AnalysisSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    bins: int = Field(default=16, ge=1)
    nu_ladder: list[float] = Field(default_factory=lambda: [0.08, 0.04, 0.02])
    x0: tuple[float, float] = (0.41421356237309515, 0.7320508075688772)
    n_directions: int = Field(default=8, ge=1)


class LoggingSettings(BaseModel):
    model_config = ConfigDict(frozen=True)

    level: str = "INFO"
    format: str = DEFAULT_LOG_FORMAT


class ExperimentConfig(BaseModel):
    """Everything a run needs; echoed into every manifest."""

    model_config = ConfigDict(frozen=True)

    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)
    field: FieldSettings = Field(default_factory=FieldSettings)
    sde: SdeConfig = Field(default_factory=SdeConfig)
    analysis: AnalysisSettings = Field(default_factory=AnalysisSettings)
    logging: LoggingSettings = Field(default_factory=LoggingSettings)

    def depauw_field(self) -> DepauwField:
        return self.field.build()


SECTIONS = {
    "experiment": ExperimentSettings,
    "field": FieldSettings,
    "sde": SdeConfig,
    "analysis": AnalysisSettings,
    "logging": LoggingSettings,
}


# ============================================================================
# LOADING
# ============================================================================


def _parse_scalar(text: str) -> Any:
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _parse_value(text: str) -> Any:
    text = text.strip()
    if text.startswith(("[", "{")):
        return _parse_scalar(text)
    if "," in text:
        return [_parse_scalar(part) for part in text.split(",") if part.strip()]
    return _parse_scalar(text)


def _resolve_key(key: str) -> list[str]:
    """Dotted path of a config key; bare keys are looked up across sections."""
    if "." in key:
        return key.split(".")
    owners = [name for name, model in SECTIONS.items() if key in model.model_fields]
    if len(owners) != 1:
        raise ConfigError(f"key '{key}' is {'unknown' if not owners else 'ambiguous'}; use section.key")
    return [owners[0], key]


def _set_path(tree: dict, path: list[str], value: Any) -> None:
    node = tree
    for part in path[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[path[-1]] = value


def parse_flat(text: str, source: str = "<config>") -> dict:
    """Parse `key = value` lines into a nested section dictionary."""
    tree: dict = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        _set_path(tree, _resolve_key(key), _parse_value(value))
    return tree


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    if text.lstrip().startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return data
    return parse_flat(text, str(path))


def _merge(base: dict, update: dict) -> dict:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict) and key != "initial":
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_config(file_data: dict | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    """
    Validate defaults < file data < overrides into an ExperimentConfig.

    Override keys follow the same rules as flat config keys.
    """
    data = dict(file_data or {})
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        patch: dict = {}
        _set_path(patch, _resolve_key(key), value)
        data = _merge(data, patch)
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def load_config(path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> ExperimentConfig:
    file_data = read_config_file(path) if path is not None else None
    config = build_config(file_data, overrides)
    logger.debug("effective configuration: %s", config.model_dump(mode="json"))
    return config


# ============================================================================
# LOGGING
# ============================================================================


def configure_logging(settings: LoggingSettings | None = None, level: str | None = None) -> None:
    """Configure the root logger from the logging section; `level` overrides it."""
    settings = settings or LoggingSettings()
    name = (level or settings.level).upper()
    numeric = logging.getLevelName(name)
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level '{name}'")
    logging.basicConfig(level=numeric, format=settings.format, force=True)
