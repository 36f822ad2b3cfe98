import configparser
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from app.errors import ConfigError

load_dotenv("config.env", override=True)
load_dotenv(override=True)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    log_level: str
    log_file: str
    threads: Optional[int]
    host: str
    port: int


def _env_int(name: str) -> Optional[int]:
    raw = os.getenv(name)
    if raw is None or not raw.strip():
        return None
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}")
    if value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}")
    return value


def load_settings() -> Settings:
    return Settings(
        log_level=os.getenv("ROCKET_LOG_LEVEL", "INFO"),
        log_file=os.getenv("ROCKET_LOG_FILE", os.path.join("logs", "rocket.log")),
        threads=_env_int("ROCKET_THREADS"),
        host=os.getenv("ROCKET_HOST", "0.0.0.0"),
        port=_env_int("ROCKET_PORT") or 8000,
    )


settings = load_settings()


def resolve_threads(requested: Optional[int]) -> int:
    """ROCKET_THREADS wins over the config/flag value; default is the CPU count"""
    env_threads = _env_int("ROCKET_THREADS")
    if env_threads is not None:
        return env_threads
    if requested is not None:
        return max(1, int(requested))
    return os.cpu_count() or 1


# Sections of the INI grammar and the ExperimentConfig field each maps onto.
_SECTION_TARGETS = {
    "scenario": ("scenario", "graph"),
    "radius": ("scenario", "radius"),
    "marginals": ("scenario", "marginals"),
    "contamination": ("scenario", "contamination"),
    "lasso": ("lasso", None),
    "power": ("power", None),
    "subsample": ("subsample", None),
}

_LIST_KEYS = {"estimators", "rho_grid", "rates", "transforms", "thresholds"}


def _parse_scalar(value: str) -> Any:
    text = value.strip()
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    if lowered in ("none", "null", ""):
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            continue
    return text


def _parse_edges(value: str) -> list:
    edges = []
    for chunk in value.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        try:
            a, b = chunk.split("-")
            edges.append({"a": int(a), "b": int(b)})
        except ValueError:
            raise ConfigError(f"Edge '{chunk}' must look like 'a-b' with integer node indices")
    return edges


def parse_ini_text(text: str) -> Dict[str, Any]:
    """Turn the sectioned key-value grammar into a nested dict for ExperimentConfig"""
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"Malformed config file: {e}")

    data: Dict[str, Any] = {}
    for section in parser.sections():
        items = {}
        for key, raw in parser.items(section):
            if key == "edges":
                items[key] = _parse_edges(raw)
            elif key in _LIST_KEYS:
                items[key] = [_parse_scalar(v) for v in raw.split(",") if v.strip()]
            else:
                items[key] = _parse_scalar(raw)

        if section == "experiment":
            data.update(items)
            continue
        if section not in _SECTION_TARGETS:
            raise ConfigError(f"Unknown config section [{section}]")
        top, sub = _SECTION_TARGETS[section]
        if sub is None:
            data.setdefault(top, {}).update(items)
        else:
            data.setdefault(top, {})[sub] = items
    return data


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a JSON config echo or an INI file into a plain dict"""
    file_path = Path(path)
    if not file_path.exists():
        raise ConfigError(f"Config file not found: {path}")
    text = file_path.read_text(encoding="utf-8")
    if file_path.suffix.lower() == ".json":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON config {path}: {e}")
        # a full report embeds its config under "config"
        if isinstance(payload, dict) and "format_version" in payload and "config" in payload:
            payload = payload["config"]
        logger.info(f"Loaded JSON config from {path}")
        return payload
    logger.info(f"Loaded INI config from {path}")
    return parse_ini_text(text)


def merge_overrides(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Flags override file values; nested dicts merge key by key"""
    merged = dict(base)
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = merge_overrides(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_experiment_config(data: Dict[str, Any]):
    from app.schemas import ExperimentConfig

    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {e}")
