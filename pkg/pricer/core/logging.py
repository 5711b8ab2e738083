"""Logging Configuration

Sets up console and rotating-file logging for pricing runs, plus a
per-run log file written next to the run's artifacts.
"""

import logging
import sys
from contextlib import contextmanager
from pathlib import Path
from logging.handlers import RotatingFileHandler
from typing import Iterator

from pricer.core.config import get_config

RUN_LOG = "run.log"


def _formatter() -> logging.Formatter:
    return logging.Formatter(
        fmt='%(asctime)s | %(levelname)-8s | %(name)s | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )


def setup_logging(verbose: bool = False):
    """Setup application logging with rotation

    Configures:
    - Console output on stderr (INFO and above, DEBUG when verbose)
    - File output with rotation (configurable level)

    Args:
        verbose: Lower the console threshold to DEBUG
    """
    config = get_config()

    log_file = Path(config.logging.file)
    log_file.parent.mkdir(parents=True, exist_ok=True)

    log_level = getattr(logging, config.logging.level.upper(), logging.INFO)
    if verbose:
        log_level = logging.DEBUG

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)
    root_logger.handlers = []

    # stdout belongs to CLI tables and JSON
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logging.DEBUG if verbose else logging.INFO)
    console_handler.setFormatter(_formatter())
    root_logger.addHandler(console_handler)

    file_handler = RotatingFileHandler(
        filename=str(log_file),
        maxBytes=config.logging.get_max_bytes(),
        backupCount=config.logging.backup_count,
        encoding='utf-8'
    )
    file_handler.setLevel(log_level)
    file_handler.setFormatter(_formatter())
    root_logger.addHandler(file_handler)

    logging.getLogger(__name__).debug(f"Logging initialized: file={log_file}, level={config.logging.level}")


@contextmanager
def run_log(directory: Path) -> Iterator[Path]:
    """Copy every record emitted during one run into ``directory/run.log``

    The file is rewritten on each run. Records below the root logger's
    level are not seen.

    Yields:
        Path of the run log
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / RUN_LOG
    handler = logging.FileHandler(str(path), mode='w', encoding='utf-8')
    handler.setFormatter(_formatter())
    root_logger = logging.getLogger()
    root_logger.addHandler(handler)
    try:
        yield path
    finally:
        root_logger.removeHandler(handler)
        handler.close()
