import logging
import os
import sys

import json_log_formatter

_HANDLER = None


def _json_handler() -> logging.Handler:
    global _HANDLER
    if _HANDLER is None:
        _HANDLER = logging.StreamHandler(sys.stderr)
        _HANDLER.setFormatter(json_log_formatter.JSONFormatter())
    return _HANDLER


def get_logger(name: str) -> logging.Logger:
    """
    Returns a module logger emitting structured JSON records on stderr.

    The level comes from LOCKLAB_LOG_LEVEL (default WARNING); stdout stays
    free for CLI reports.

    Args:
        name (str): Usually the calling module's __name__.

    Returns:
        logging.Logger: The configured logger.
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger.addHandler(_json_handler())
        logger.propagate = False
    logger.setLevel(os.environ.get("LOCKLAB_LOG_LEVEL", "WARNING").upper())
    return logger


def set_log_level(level: str) -> None:
    """Re-levels every lockutils / workflow logger already created."""
    for name, logger in logging.Logger.manager.loggerDict.items():
        if isinstance(logger, logging.Logger) and name.split(".")[0] in ("lockutils", "workflow", "config"):
            logger.setLevel(level.upper())
