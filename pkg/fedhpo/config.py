"""Configuration management."""

import json
import logging
import os
from importlib import resources
from pathlib import Path
from typing import Any, Optional, Union

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from .errors import ConfigError
from .models import CsvSource, ExperimentConfig, ExplicitScheme, IdxSource

ENV_LOG_LEVEL = "FEDHPO_LOG"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
PRESET_SUFFIX = ".json"

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None) -> int:
    """Attach a Rich handler on stderr to the package logger.

    Args:
        level: Level name; falls back to $FEDHPO_LOG, then WARNING

    Returns:
        The numeric level that was applied
    """
    requested = level or os.environ.get(ENV_LOG_LEVEL) or "WARNING"
    name = requested.strip().upper()
    valid = name in LOG_LEVELS
    numeric = getattr(logging, name) if valid else logging.WARNING

    package_logger = logging.getLogger("fedhpo")
    for handler in list(package_logger.handlers):
        if isinstance(handler, RichHandler):
            package_logger.removeHandler(handler)
    package_logger.addHandler(RichHandler(console=Console(stderr=True), show_path=False))
    package_logger.setLevel(numeric)
    if not valid:
        logger.warning("invalid log level %r in %s, using WARNING", requested, ENV_LOG_LEVEL)
    return numeric


def get_output_dir(base_dir: Optional[Path] = None) -> Path:
    """Get output directory for a run.

    Args:
        base_dir: Base directory (defaults to ./output)

    Returns:
        Path to output directory

    Raises:
        ConfigError: If the directory cannot be created
    """
    if base_dir is None:
        base_dir = Path.cwd() / "output"

    base_dir = Path(base_dir)
    try:
        base_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ConfigError(f"cannot create output directory {base_dir}: {e.strerror or e}") from e

    return base_dir


def list_presets() -> list[str]:
    """Names of the shipped experiment presets."""
    folder = resources.files("fedhpo") / "presets"
    return sorted(
        entry.name[: -len(PRESET_SUFFIX)] for entry in folder.iterdir() if entry.name.endswith(PRESET_SUFFIX)
    )


def preset_path(name: str) -> Path:
    """Path of a shipped preset.

    Raises:
        ConfigError: If no preset of that name exists
    """
    entry = resources.files("fedhpo") / "presets" / f"{name}{PRESET_SUFFIX}"
    if not entry.is_file():
        raise ConfigError(f"unknown preset '{name}' (available: {', '.join(list_presets())})")
    return Path(str(entry))


def resolve_config_source(source: Union[str, Path]) -> Path:
    """Accept a config file path or a preset name."""
    path = Path(source)
    if path.is_file():
        return path
    if path.suffix or path.parent != Path("."):
        raise ConfigError(f"config file not found: {path}")
    return preset_path(str(source))


def parse_override(item: str) -> tuple[list[str], Any]:
    """Split `a.b.c=value`; the value is parsed as JSON when possible."""
    key, sep, raw = item.partition("=")
    keys = [part for part in key.strip().split(".")]
    if not sep or not all(keys):
        raise ConfigError(f"override '{item}' must look like key.path=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return keys, value


def apply_override(document: dict, keys: list[str], value: Any) -> None:
    """Set a dotted key inside a nested JSON document, creating objects as needed."""
    node = document
    for depth, key in enumerate(keys[:-1]):
        child = node.setdefault(key, {})
        if not isinstance(child, dict):
            raise ConfigError(f"cannot override '{'.'.join(keys)}': '{'.'.join(keys[: depth + 1])}' is not an object")
        node = child
    node[keys[-1]] = value


def _resolve_relative(value: Optional[str], base: Path) -> Optional[str]:
    if value is None:
        return None
    path = Path(value)
    return str(path if path.is_absolute() else base / path)


def _resolve_paths(document: dict, base: Path) -> None:
    dataset = document.get("dataset")
    if isinstance(dataset, dict):
        for key in ("path", "labels_path"):
            if isinstance(dataset.get(key), str):
                dataset[key] = _resolve_relative(dataset[key], base)
    scheme = document.get("partition", {}).get("scheme") if isinstance(document.get("partition"), dict) else None
    if isinstance(scheme, dict) and isinstance(scheme.get("assignment_path"), str):
        scheme["assignment_path"] = _resolve_relative(scheme["assignment_path"], base)
    analysis = document.get("analysis")
    if isinstance(analysis, dict) and isinstance(analysis.get("results"), list):
        analysis["results"] = [_resolve_relative(p, base) if isinstance(p, str) else p for p in analysis["results"]]


def _describe(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "config"
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def _check_paths(config: ExperimentConfig) -> None:
    referenced: list[Path] = []
    if isinstance(config.dataset, IdxSource):
        referenced += [config.dataset.path, config.dataset.labels_path]
    elif isinstance(config.dataset, CsvSource):
        referenced.append(config.dataset.path)
    if isinstance(config.partition.scheme, ExplicitScheme):
        referenced.append(config.partition.scheme.assignment_path)
    referenced += config.analysis.results
    for path in referenced:
        if not path.exists():
            raise ConfigError(f"referenced path does not exist: {path}")


def load_experiment_config(
    source: Union[str, Path],
    overrides: Optional[list[str]] = None,
    seed: Optional[int] = None,
) -> tuple[ExperimentConfig, str]:
    """Load, override and validate an experiment config.

    Args:
        source: Config file path or preset name
        overrides: `key.path=value` items applied in order
        seed: Master seed replacing the config's `seed`

    Returns:
        Tuple of (validated config, raw config text as read)

    Raises:
        ConfigError: On unreadable, malformed or invalid configs
    """
    path = resolve_config_source(source)
    try:
        text = path.read_bytes().decode("utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        document = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: config must be a JSON object")

    for item in overrides or []:
        apply_override(document, *parse_override(item))
    if seed is not None:
        document["seed"] = seed
    _resolve_paths(document, path.parent)

    try:
        config = ExperimentConfig.model_validate(document)
    except ValidationError as e:
        raise ConfigError(_describe(e)) from e
    _check_paths(config)
    logger.debug("loaded config %s (%d override(s))", path, len(overrides or []))
    return config, text
