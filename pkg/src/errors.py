"""Error categories shared by every module of the toolkit."""

from typing import Optional


class LTAEError(Exception):
    """
    Base exception for toolkit failures.

    Each category carries the process exit code the CLI reports for it, and
    every instance carries a short machine-readable reason.
    """
    exit_code = 1
    default_reason = "failure"

    def __init__(self, message: str, reason: Optional[str] = None):
        super().__init__(message)
        self.reason = reason or self.default_reason


class ConfigurationError(LTAEError):
    """Raised when a configuration is invalid or cannot be loaded."""
    exit_code = 2
    default_reason = "invalid_config"


class DataError(LTAEError):
    """Raised when a dataset or checkpoint is malformed or inconsistent."""
    exit_code = 3
    default_reason = "invalid_data"


class NumericError(LTAEError):
    """Raised on shape contract violations and numeric failures."""
    exit_code = 4
    default_reason = "numeric_failure"
