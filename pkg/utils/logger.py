"""Logging for solves, sweeps and CLI runs."""

import logging
import os
import sys
from datetime import datetime
from pathlib import Path
from typing import List, Optional

from utils import config

_LOGGER_NAME = 'lgli'
_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def _console_handler(logger: logging.Logger) -> logging.Handler:
    """The stderr handler of the shared logger, attached on first use only."""
    for handler in logger.handlers:
        if type(handler) is logging.StreamHandler:
            return handler
    # stdout carries command output
    console = logging.StreamHandler(sys.stderr)
    console.setFormatter(logging.Formatter(_FORMAT))
    console.setLevel(logging.INFO)
    logger.addHandler(console)
    return console


class RunLogger:
    """Logger for collocation runs with console, in-memory, and file output."""

    def __init__(self, log_to_file: bool = False, log_file: Optional[Path] = None,
                 verbose: bool = False):
        """
        Initialize the run logger.

        Args:
            log_to_file: Whether to write logs to a file
            log_file: Path to log file (if None, auto-generates based on timestamp)
            verbose: Whether debug messages (per-iteration solver output) are shown
        """
        self.log_entries: List[str] = []
        self.log_to_file = log_to_file
        self.log_file = log_file or (config.LOG_DIR / f"run_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log")
        self.verbose = verbose

        self.logger = logging.getLogger(_LOGGER_NAME)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False

        self._console = _console_handler(self.logger)
        # only a verbose logger touches the shared console level; close() restores it
        if verbose:
            self._console.setLevel(logging.DEBUG)

        self._file_handler: Optional[logging.FileHandler] = None
        if self.log_to_file:
            self._file_handler = self._attach_file_handler(Path(self.log_file))

    def _attach_file_handler(self, path: Path) -> logging.FileHandler:
        target = os.path.abspath(path)
        for handler in self.logger.handlers:
            if isinstance(handler, logging.FileHandler) and handler.baseFilename == target:
                return handler
        path.parent.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(path)
        handler.setLevel(logging.DEBUG)
        handler.setFormatter(logging.Formatter(_FORMAT))
        self.logger.addHandler(handler)
        return handler

    def close(self):
        """Detach and close the log file; undo the verbose console level."""
        if self._file_handler is not None:
            self.logger.removeHandler(self._file_handler)
            self._file_handler.close()
            self._file_handler = None
        if self.verbose:
            self._console.setLevel(logging.INFO)

    def __enter__(self) -> 'RunLogger':
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def _record(self, level: str, message: str):
        timestamp = datetime.now().strftime('%Y-%m-%d %H:%M:%S')
        self.log_entries.append(f"[{timestamp}] {level}: {message}")

    def debug(self, message: str):
        """Log a debug message (kept in memory only when verbose)."""
        if self.verbose:
            self._record('DEBUG', message)
        self.logger.debug(message)

    def info(self, message: str):
        """Log an info message."""
        self._record('INFO', message)
        self.logger.info(message)

    def warning(self, message: str):
        """Log a warning message."""
        self._record('WARNING', message)
        self.logger.warning(message)

    def error(self, message: str):
        """Log an error message."""
        self._record('ERROR', message)
        self.logger.error(message)

    def get_logs(self) -> List[str]:
        """Get all log entries."""
        return self.log_entries.copy()


_default_logger: Optional[RunLogger] = None


def get_logger() -> RunLogger:
    """Return the process-wide default logger, creating it on first use."""
    global _default_logger
    if _default_logger is None:
        _default_logger = RunLogger()
    return _default_logger
