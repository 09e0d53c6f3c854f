"""Custom exceptions for the nctorus laboratory."""

from typing import Any, Sequence


class NCTorusError(Exception):
    """Base exception for all nctorus errors."""

    pass


class ValidationError(NCTorusError):
    """Raised when input validation fails."""

    pass


class ThetaMismatchError(ValidationError):
    """Raised when two algebra elements carry different deformation parameters."""

    pass


class InvertibilityError(ValidationError):
    """Raised when a formula needs the inverse of a generator that has a zero eigenvalue."""

    pass


class ConfigError(NCTorusError):
    """Raised when an experiment configuration fails schema validation.

    ``diagnostics`` holds every violation found, so callers can report all of
    them at once instead of stopping at the first.
    """

    def __init__(self, message: str, diagnostics: Sequence[Any] = ()) -> None:
        super().__init__(message)
        self.diagnostics = list(diagnostics)
