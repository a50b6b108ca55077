"""Exception hierarchy. Everything the package raises on purpose derives from ChromaAssocError."""

from __future__ import annotations

from typing import Any


class ChromaAssocError(Exception):
    """Base class for all chroma-assoc errors."""


class ConfigurationError(ChromaAssocError):
    """Missing or invalid configuration (API key, embedded data, CLI overrides)."""


class InputValidationError(ChromaAssocError, ValueError):
    """An argument violates an operation's precondition."""


class EmptyLibraryError(InputValidationError):
    """A color library would contain no colors."""


class ParseFailure(ChromaAssocError, ValueError):
    """A backend response did not contain a usable rating."""

    def __init__(self, message: str, raw: str = "") -> None:
        super().__init__(message)
        self.raw = raw


class ProtocolViolation(ChromaAssocError):
    """A prompt did not match the rating template."""


class BackendError(ChromaAssocError):
    """Transport-level failure talking to a rating backend."""

    def __init__(self, message: str, *, status_code: int | None = None, retry_after: float | None = None) -> None:
        super().__init__(message)
        self.status_code = status_code
        self.retry_after = retry_after


class IncompleteDistributionError(ChromaAssocError):
    """At least one color received no parsable rating after all retries."""

    def __init__(self, message: str, *, distribution: Any, records: list, failed_colors: list[int]) -> None:
        super().__init__(message)
        # distribution holds NaN for every failed color
        self.distribution = distribution
        self.records = records
        self.failed_colors = failed_colors


class UndefinedStatisticError(ChromaAssocError, ValueError):
    """A statistic is undefined for the given input (constant vector, r = -1, ...)."""


class DegenerateTestError(UndefinedStatisticError):
    """A hypothesis test has zero variance."""


class SingularDesignError(ChromaAssocError, ValueError):
    """Design matrix is rank deficient."""


class InsufficientDataError(ChromaAssocError, ValueError):
    """Not enough observations for the requested computation."""


class SchemaError(ChromaAssocError, ValueError):
    """A data file does not match its schema."""

    def __init__(self, message: str, *, path: Any = None, line: int | None = None) -> None:
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(f"{where}{message}")
        self.path = path
        self.line = line


class ManifestMismatchError(ChromaAssocError):
    """A rating cache or run directory belongs to a different run configuration."""


class ConceptSetMismatchError(ChromaAssocError):
    """Two runs being compared do not cover the same concepts."""

    def __init__(self, only_left: set[str], only_right: set[str]) -> None:
        parts = []
        if only_left:
            parts.append("only in first: " + ", ".join(sorted(only_left)))
        if only_right:
            parts.append("only in second: " + ", ".join(sorted(only_right)))
        super().__init__("Concept sets differ (" + "; ".join(parts) + ")")
        self.only_left = only_left
        self.only_right = only_right
