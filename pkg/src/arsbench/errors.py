"""Shared exception types."""

from __future__ import annotations


class ConfigurationError(ValueError):
    """A configuration value violates its documented constraints."""


class InvalidDistributionError(ValueError):
    """A token distribution is empty, negative, or has no usable mass."""


class DegenerateDistributionError(InvalidDistributionError):
    """Masking removed every candidate that had probability mass."""


class DatasetError(ValueError):
    """A dataset or script file failed to parse or violates its schema."""


class BackendError(RuntimeError):
    """A generation backend failed. Carries retry metadata when relevant."""

    def __init__(self, message: str, *, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class CapabilityError(BackendError):
    """The backend answered but cannot supply what the caller needs,
    e.g. an endpoint that does not expose token log-probabilities."""


class ScriptDesyncError(BackendError):
    """A scripted backend was handed a context it never emitted."""
