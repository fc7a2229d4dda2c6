import logging
import sys
from typing import Any, MutableMapping

import numpy as np
import structlog
from augsched.config.settings import settings


def numpy_to_builtin(_, __, event_dict: MutableMapping[str, Any]) -> MutableMapping[str, Any]:
    """Turn numpy scalars and arrays into JSON-native values"""
    for key, value in event_dict.items():
        if isinstance(value, np.generic):
            event_dict[key] = value.item()
        elif isinstance(value, np.ndarray):
            event_dict[key] = value.tolist()
    return event_dict


def add_run_context(_, __, event_dict: MutableMapping[str, Any]) -> MutableMapping[str, Any]:
    """Stamp ``run=<method>/seed<n>`` on lines emitted inside a training run"""
    if "method" in event_dict and "seed" in event_dict and "run" not in event_dict:
        event_dict["run"] = f"{event_dict['method']}/seed{event_dict['seed']}"
    return event_dict


def setup_logging(level: str = None):
    """
    Configure application logging

    Logs go to stderr so the CLI can print reports on stdout.

    Args:
        level (str, optional): Log level override. Defaults to settings.LOG_LEVEL.

    Returns:
        structlog.BoundLogger: Configured logger instance
    """
    level = (level or settings.LOG_LEVEL).upper()

    # Set up standard logging
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=logging.getLevelName(level),
    )
    # basicConfig is a no-op once handlers exist; the level override still applies
    logging.getLogger().setLevel(logging.getLevelName(level))

    # Configure structlog processors
    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            add_run_context,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            numpy_to_builtin,
            structlog.processors.JSONRenderer(),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    logger = structlog.get_logger(settings.APP_NAME)
    logger.info("Logging configured", log_level=level)
    return logger
