"""
Exception hierarchy for dialpath.

Library code raises these; the application layer in main.py catches them,
logs them through the Logger and turns them into exit codes.
"""

from typing import Optional


class DialPathError(Exception):
    """Base class for every error raised by dialpath."""


class CorpusFormatError(DialPathError):
    """A corpus file could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class ValidationError(DialPathError):
    """A data record violates one of its invariants."""


class EmbeddingFormatError(DialPathError):
    """A word-vector file is malformed."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class GraphError(DialPathError):
    """A graph or reasoning path is inconsistent, or an autodiff graph is detached."""


class NumericalError(DialPathError):
    """A forward or optimizer step produced NaN or Inf."""


class TrainingDivergedError(DialPathError):
    """Training aborted because the loss became non-finite."""

    def __init__(self, message: str, diagnostics: Optional[dict] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class ConfigError(DialPathError):
    """A configuration value is missing or out of range."""


class CheckpointError(DialPathError):
    """A binary container could not be read or does not match the model."""


class EvaluationError(DialPathError):
    """Predictions and references cannot be aligned."""
