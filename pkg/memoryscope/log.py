import logging
import os
import sys

ENV_VAR = "MEMORYSCOPE_LOG"
FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def resolve_level(value: str | None, default: int = logging.WARNING) -> int:
    if not value:
        return default
    value = value.strip()
    if value.isdigit():
        return int(value)
    level = logging.getLevelName(value.upper())
    if isinstance(level, int):
        return level
    return default


def configure_logging(verbosity: int = 0) -> logging.Logger:
    """
    Install one stderr handler on the package logger.
    Level comes from MEMORYSCOPE_LOG; each ``-v`` lowers it by one step.
    """
    level = resolve_level(os.environ.get(ENV_VAR))
    level = max(logging.DEBUG, level - 10 * verbosity)

    logger = logging.getLogger("memoryscope")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(FORMAT))
    logger.addHandler(handler)
    logger.setLevel(level)
    logger.propagate = False
    return logger
