"""Exception hierarchy shared across the toolkit."""

from __future__ import annotations


class TeamRulesError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(TeamRulesError, ValueError):
    """Invalid inputs, configuration, or file contents."""


class DatasetFormatError(ValidationError):
    """A dataset file violates the line-delimited JSON format.

    ``line`` is the 1-based line number the error refers to, when known.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ParseError(DatasetFormatError):
    """A line is not valid JSON."""


class SchemaError(DatasetFormatError):
    """A parsed document violates the dataset schema."""


class BackendError(TeamRulesError, RuntimeError):
    """A remote text backend (LLM or embedder) failed.

    ``trace`` carries whatever partial description trace existed when the
    failure happened, so callers can inspect completed rounds.
    """

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace
