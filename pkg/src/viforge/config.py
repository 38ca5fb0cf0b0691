import json
import os
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import ValidationError

from viforge.bench.config import ExperimentConfig
from viforge.errors import ConfigError

ENV_OVERRIDES = {
    "VIFORGE_SEED": ("seed", int),
    "VIFORGE_REPLICATES": ("replicates", int),
    "VIFORGE_OUT": ("out_dir", str),
    "VIFORGE_N_JOBS": ("n_jobs", int),
}


def _deep_update(target, source):
    """Deep update a nested dictionary."""
    for key, value in source.items():
        if key in target and isinstance(target[key], dict) and isinstance(value, dict):
            _deep_update(target[key], value)
        else:
            target[key] = value


def _read_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        if path.suffix == ".toml":
            with path.open("rb") as f:
                return tomllib.load(f)
        with path.open("r", encoding="utf-8") as f:
            return json.load(f)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e


def load_config(
    config_path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """Load an experiment config from file, then environment, then explicit overrides."""
    config: Dict[str, Any] = {}

    # Load from file if provided (JSON, or TOML by extension)
    if config_path:
        config = _read_file(Path(config_path))

    # Whole-config JSON from the environment
    if os.getenv("VIFORGE_CONFIG"):
        try:
            env_config = json.loads(os.getenv("VIFORGE_CONFIG", "{}"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"VIFORGE_CONFIG is not valid JSON: {e}") from e
        _deep_update(config, env_config)

    # Individual environment variables take precedence
    for var, (key, cast) in ENV_OVERRIDES.items():
        raw = os.getenv(var)
        if raw:
            try:
                config[key] = cast(raw)
            except ValueError as e:
                raise ConfigError(f"{var}={raw!r} is not a valid {cast.__name__}") from e

    # Command-line values win over everything
    if overrides:
        _deep_update(config, {k: v for k, v in overrides.items() if v is not None})

    try:
        return ExperimentConfig.model_validate(config)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e
