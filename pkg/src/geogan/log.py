"""Logging setup shared by the command-line tools and scripts"""
import logging
import sys
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s [%(name)s-%(levelname)s]: %(message)s'


def configure_logging(
    level: str = "INFO",
    log_file: Optional[Union[str, Path]] = None
) -> logging.Logger:
    """
    Install console (and optionally file) handlers on the package logger

    Args:
        level: Level name such as "INFO" or "DEBUG"
        log_file: Optional path that receives a copy of every record

    Returns:
        The configured "geogan" logger
    """
    logger = logging.getLogger("geogan")
    logger.setLevel(logging.getLevelName(level.upper()))
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    formatter = logging.Formatter(LOG_FORMAT)
    console = logging.StreamHandler(sys.stdout)
    console.setFormatter(formatter)
    logger.addHandler(console)

    if log_file is not None:
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(filename=str(log_file))
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    logger.propagate = False
    return logger
