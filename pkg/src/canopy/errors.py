"""Exception hierarchy shared by all engine modules."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine errors."""


class IngestError(EngineError):
    """Malformed or inconsistent feature-stream document.

    Carries the 1-based line number of the offending record when known.
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(EngineError):
    """Invalid arguments, config, or query (CLI exit code 2)."""


class ProviderError(EngineError):
    """Provider RPC failure (CLI exit code 3)."""

    def __init__(self, message: str, code: int | None = None):
        self.code = code
        super().__init__(message)


class PersistenceError(EngineError):
    """Corrupt, truncated, or version-mismatched on-disk artifact."""
