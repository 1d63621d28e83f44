"""Exception hierarchy shared across the package."""

from __future__ import annotations


class CleanupError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CleanupError):
    """Invalid configuration, map, or experiment setup."""


class StateError(CleanupError):
    """Operation applied to a world/session in the wrong state."""


class RecordCorruptionError(CleanupError):
    """An episode record does not replay to its recorded state."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class NumericsError(CleanupError):
    """Non-finite values encountered where finite numbers are required."""


class DegenerateDataError(CleanupError):
    """Statistical input with no usable variance or missing cells."""
