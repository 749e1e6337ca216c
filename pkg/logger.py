"""
Logging configuration for the evgraph engine
Provides consistent logging across all modules
"""

import logging
import os
import sys
from config import LOG_LEVEL, LOG_FORMAT, LOG_DATE_FORMAT, LOG_LEVEL_ENV_VAR


def setup_logger(name: str, level: str = None) -> logging.Logger:
    """
    Set up and configure a logger with consistent formatting

    Args:
        name: Name of the logger (usually __name__)
        level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL);
            defaults to $EVGRAPH_LOG_LEVEL, then config.LOG_LEVEL

    Returns:
        Configured logger instance
    """
    logger = logging.getLogger(name)

    # Only add handler if logger doesn't have any (prevents duplicate logs)
    if not logger.handlers:
        level = level or os.getenv(LOG_LEVEL_ENV_VAR, LOG_LEVEL)
        numeric_level = getattr(logging, level.upper(), logging.INFO)
        logger.setLevel(numeric_level)

        # stdout carries predictions and reports
        handler = logging.StreamHandler(sys.stderr)
        handler.setLevel(numeric_level)
        handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=LOG_DATE_FORMAT))
        logger.addHandler(handler)
        logger.propagate = False

    return logger


def get_logger(name: str) -> logging.Logger:
    """Get or create a logger for the given name"""
    return setup_logger(name)


def set_level(level: str) -> None:
    """Change the level of every logger created through setup_logger"""
    numeric_level = getattr(logging, level.upper(), logging.INFO)
    for existing in list(logging.Logger.manager.loggerDict.values()):
        if isinstance(existing, logging.Logger) and existing.handlers:
            existing.setLevel(numeric_level)
            for handler in existing.handlers:
                handler.setLevel(numeric_level)
