"""Logging system for KPR Toolkit."""

import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, List, Optional, Sequence

from config import RunConfig

LOGGER_NAME = 'kpr_toolkit'


@dataclass
class LogEntry:
    """A single log entry."""

    timestamp: datetime
    level: str  # INFO, WARNING, ERROR, RESULT
    message: str
    subcommand: Optional[str] = None
    error_type: Optional[str] = None
    error_details: Optional[str] = None


class RunLogger:
    """Logs the stages, results and failures of one toolkit run."""

    def __init__(self, config: RunConfig):
        """Initialize the run logger.

        Args:
            config: Configuration object
        """
        self.config = config
        self.log_entries: List[LogEntry] = []
        self.subcommand: Optional[str] = None

        self.logs_dir = Path(config.output.logs_folder)
        self.logs_dir.mkdir(parents=True, exist_ok=True)

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        self.log_file_path = self.logs_dir / f"run_{timestamp}.log"

        self._setup_logging()

    def _setup_logging(self):
        """Attach one file handler to the package logger.

        Module loggers (``kpr_toolkit.<module>``) propagate into it.
        """
        self.logger = logging.getLogger(LOGGER_NAME)
        self.logger.setLevel(logging.DEBUG)
        self.logger.handlers.clear()

        file_handler = logging.FileHandler(self.log_file_path, encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        formatter = logging.Formatter(
            '%(asctime)s.%(msecs)03d | %(levelname)s | %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )
        file_handler.setFormatter(formatter)
        self.logger.addHandler(file_handler)

    def _record(self, level: str, message: str, **details):
        self.log_entries.append(LogEntry(
            timestamp=datetime.now(),
            level=level,
            message=message,
            subcommand=self.subcommand,
            **details
        ))

    def log_run_start(self, subcommand: str, config: Optional[RunConfig] = None):
        """Log the start of a subcommand together with its model parameters."""
        self.subcommand = subcommand
        message = f"Starting '{subcommand}'"
        self.logger.info(message)
        self._record('INFO', message)

        config = config or self.config
        m = config.model
        params_message = (f"Model: N={m.N} alpha={m.alpha!r} delta={m.delta!r} sigma={m.sigma!r} "
                          f"E={m.energy_E!r} b={m.b!r} mu={m.mu!r}")
        self.logger.debug(params_message)
        self._record('DEBUG', params_message)

    def log_stage(self, message: str):
        self.logger.info(message)
        self._record('INFO', message)

    def log_result(self, name: str, value: Any):
        """Log a named numerical result."""
        message = f"Result {name} = {value!r}"
        self.logger.info(message)
        self._record('RESULT', message)

    def log_warning(self, message: str):
        self.logger.warning(message)
        self._record('WARNING', message)

    def log_error(self, error_type: str, error_message: str, stack_trace: Optional[str] = None):
        """Log an error with full details.

        Args:
            error_type: Exception class name
            error_message: Error message
            stack_trace: Optional stack trace
        """
        message = f"{error_type}: {error_message}"
        self.logger.error(message)
        self._record('ERROR', message, error_type=error_type, error_details=error_message)

        if stack_trace:
            self.logger.debug(f"Stack trace: {stack_trace}")

    def log_run_complete(self, status: int, artifacts: Sequence[Path]):
        """Log the end of the run.

        Args:
            status: Process exit status
            artifacts: Files written by the run
        """
        message = f"Run complete: status {status}, {len(artifacts)} artifacts"
        self.logger.info(message)
        self._record('INFO', message)
        for artifact in artifacts:
            self.logger.debug(f"Artifact: {artifact}")

    def get_log_file_path(self) -> Path:
        return self.log_file_path

    def get_log_entries(self) -> List[LogEntry]:
        """Get all log entries.

        Returns:
            List of LogEntry objects
        """
        return self.log_entries.copy()

    def close(self):
        """Close the logger and flush all handlers."""
        for handler in list(self.logger.handlers):
            handler.close()
            self.logger.removeHandler(handler)
