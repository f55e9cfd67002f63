"""
Logging utilities for the U-statistic LIL laboratory.
"""

import logging
import os
import sys
from typing import Optional

LOG_FILE_NAME = "ulil-lab.log"


def setup_logging(verbose: bool = False, log_file: Optional[str] = LOG_FILE_NAME) -> logging.Logger:
    """
    Set up logging configuration.

    Replaces handlers from any earlier call, so a process can run several
    commands with different output directories.

    Args:
        verbose: Enable verbose (DEBUG) logging
        log_file: Path to log file; None logs to stdout only

    Returns:
        Logger instance
    """
    level = logging.DEBUG if verbose else logging.INFO

    handlers = [logging.StreamHandler(sys.stdout)]
    if log_file:
        directory = os.path.dirname(log_file)
        if directory:
            os.makedirs(directory, exist_ok=True)
        handlers.append(logging.FileHandler(log_file))

    logging.basicConfig(
        level=level,
        format="%(asctime)s - %(levelname)s - %(message)s",
        handlers=handlers,
        force=True,
    )

    return logging.getLogger(__name__)
