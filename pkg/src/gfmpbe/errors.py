"""Exception types shared across the package."""

from __future__ import annotations


class GfmpbeError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(GfmpbeError):
    """Invalid parameter values or inconsistent configuration."""


class ParseError(ConfigError):
    """Malformed input text; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class FormatError(ParseError):
    """Malformed interface interchange document."""


class DomainError(GfmpbeError):
    """A point fell outside the region where an operation is defined."""


class SingularityError(GfmpbeError):
    """Evaluation requested too close to a point-charge center."""


class AssemblyError(GfmpbeError):
    """Inconsistent interface data encountered while building operators."""


class NumericalError(GfmpbeError):
    """A linear solve failed (zero pivot or similar)."""


class DivergenceError(GfmpbeError):
    """The pseudo-time iteration produced a non-finite or runaway field."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


class InitializationError(DivergenceError):
    """The linearized pre-solve used to build an initial condition diverged."""
