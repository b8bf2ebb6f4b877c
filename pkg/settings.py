"""
Configuration access for jellynet.
Loads config.json once and hands out per-component sections.
"""

import json
import os
from functools import lru_cache
from typing import Any, Dict, Optional

from logging_config import get_logger

logger = get_logger('settings')

DEFAULT_CONFIG_PATH = "config.json"
CONFIG_ENV_VAR = "JELLYNET_CONFIG"


def config_path() -> str:
    """Path of the active configuration file (env override first)."""
    return os.getenv(CONFIG_ENV_VAR, DEFAULT_CONFIG_PATH)


@lru_cache(maxsize=8)
def _load_config(path: str) -> Dict[str, Any]:
    """Load configuration from JSON file."""
    try:
        with open(path, 'r') as f:
            config = json.load(f)
        logger.debug(f"Loaded configuration from {path}")
        return config
    except (FileNotFoundError, json.JSONDecodeError) as e:
        logger.warning(f"Could not load config from {path}: {e}")
        return {}


def load_config(path: Optional[str] = None) -> Dict[str, Any]:
    """Return the whole configuration dictionary."""
    return _load_config(path or config_path())


def get_section(name: str, path: Optional[str] = None) -> Dict[str, Any]:
    """Return one configuration section, empty when it is missing."""
    return dict(load_config(path).get(name, {}))


def reload() -> None:
    """Forget cached configuration (tests switch files through the env var)."""
    _load_config.cache_clear()
