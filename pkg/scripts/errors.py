"""
Exception hierarchy for epirank.

Library code raises these; the CLI maps them to exit codes
(ParameterError -> 1, any other EpirankError -> 2).
"""

from typing import Optional


class EpirankError(Exception):
    """Base class for every error raised by the library."""


class ParameterError(EpirankError, ValueError):
    """An argument is outside its allowed range."""


class DataError(EpirankError):
    """Input data is malformed, empty or inconsistent with the model."""

    def __init__(self, message: str, path: Optional[str] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{where}{message}")


class StateLimitError(EpirankError):
    """A machine construction exceeded the configured state cap."""


class ConvergenceError(EpirankError):
    """The moment recursion met a state with r_denom <= 0."""


class SizeGuardError(EpirankError):
    """A brute-force search was asked to run on an instance that is too large."""


class VarianceError(EpirankError):
    """The assembled variance is negative beyond numerical tolerance."""
