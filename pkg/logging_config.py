"""
Logging configuration for jellynet.
Provides centralized logging setup with file rotation and console output.
"""

import functools
import json
import logging
import logging.handlers
import sys
import time
from pathlib import Path
from typing import Any, Dict, Optional

ROOT_LOGGER_NAME = 'jellynet'

DEFAULT_LOG_CONFIG = {
    "level": "INFO",
    "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    "file": "logs/jellynet.log",
    "max_bytes": 10485760,
    "backup_count": 5
}


def setup_logging(config_path: str = "config.json",
                  level: Optional[str] = None,
                  log_file: Optional[str] = None) -> logging.Logger:
    """
    Set up logging for the command-line tools.

    Args:
        config_path: Path to the configuration file
        level: Optional level override (e.g. from --log-level or the environment)
        log_file: Optional log file override; an empty string disables the file handler

    Returns:
        Configured jellynet logger
    """
    try:
        with open(config_path, 'r') as f:
            config = json.load(f)
        log_config: Dict[str, Any] = {**DEFAULT_LOG_CONFIG, **config.get('logging', {})}
    except (FileNotFoundError, json.JSONDecodeError) as e:
        print(f"Warning: Could not load logging config from {config_path}: {e}", file=sys.stderr)
        log_config = dict(DEFAULT_LOG_CONFIG)

    level_name = (level or log_config['level']).upper()
    log_file = log_config['file'] if log_file is None else log_file

    root_logger = logging.getLogger(ROOT_LOGGER_NAME)
    root_logger.setLevel(logging.DEBUG)
    root_logger.handlers.clear()
    root_logger.propagate = False

    formatter = logging.Formatter(log_config['format'])

    if log_file:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            log_file,
            maxBytes=log_config['max_bytes'],
            backupCount=log_config['backup_count']
        )
        file_handler.setFormatter(formatter)
        file_handler.setLevel(logging.DEBUG)
        root_logger.addHandler(file_handler)

    # Console goes to stderr so CSV on stdout stays clean
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    console_handler.setLevel(getattr(logging, level_name, logging.INFO))
    root_logger.addHandler(console_handler)

    app_logger = get_logger('cli')
    app_logger.debug("Logging system initialized")
    app_logger.debug(f"Log file: {log_file or '(disabled)'}")
    app_logger.debug(f"Log level: {level_name}")
    return app_logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance for a specific module.

    Args:
        name: Name of the module/component

    Returns:
        Logger instance
    """
    return logging.getLogger(f'{ROOT_LOGGER_NAME}.{name}')


def _short(value: Any, limit: int = 80) -> str:
    text = repr(value)
    return text if len(text) <= limit else text[:limit - 3] + '...'


def log_function_call(func):
    """
    Decorator to log function entry and exit with parameters and execution time.
    """
    logger = get_logger(func.__module__)

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        debug = logger.isEnabledFor(logging.DEBUG)
        if debug:
            shown = ', '.join([_short(a) for a in args] +
                              [f"{k}={_short(v)}" for k, v in kwargs.items()])
            logger.debug(f"Entering {func.__name__}({shown})")
        start_time = time.time()

        try:
            result = func(*args, **kwargs)
            if debug:
                logger.debug(f"Exiting {func.__name__} successfully in {time.time() - start_time:.3f}s")
            return result
        except Exception as e:
            execution_time = time.time() - start_time
            logger.error(f"Error in {func.__name__} after {execution_time:.3f}s: {str(e)}", exc_info=True)
            raise

    return wrapper


class LoggedOperation:
    """Context manager for logging the start and end of operations."""

    def __init__(self, operation_name: str, logger_name: str = None):
        self.operation_name = operation_name
        self.logger = get_logger(logger_name or 'operations')
        self.start_time = None
        self.elapsed = 0.0

    def __enter__(self):
        self.start_time = time.time()
        self.logger.info(f"Starting operation: {self.operation_name}")
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        self.elapsed = time.time() - self.start_time
        if exc_type is None:
            self.logger.info(f"Completed operation: {self.operation_name} in {self.elapsed:.3f}s")
        else:
            self.logger.error(f"Failed operation: {self.operation_name} after {self.elapsed:.3f}s: {exc_val}")
        return False  # Don't suppress exceptions
