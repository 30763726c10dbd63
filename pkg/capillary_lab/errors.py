"""Exception hierarchy for capillary-bubble-lab."""

from __future__ import annotations


class CapillaryLabError(Exception):
    """Base class for all library errors."""


class DomainError(CapillaryLabError, ValueError):
    """A point or parameter lies outside the admissible domain."""


class InputError(CapillaryLabError, ValueError):
    """Numeric input violates a stated positivity or structure requirement."""


class GeometryError(CapillaryLabError):
    """Degenerate geometry: tangency, collapsed graph, surface leaving M, colliding leaves."""

    def __init__(self, message: str, *, where: float | None = None):
        super().__init__(message)
        self.where = where


class PreconditionError(CapillaryLabError):
    """An operation precondition (criticality, convexity, angle limit) does not hold."""


class ConvergenceError(CapillaryLabError):
    """An iterative solve did not converge; carries the residual history."""

    def __init__(self, message: str, history: list[float] | None = None):
        super().__init__(message)
        self.history = list(history or [])


class ConfigurationError(CapillaryLabError):
    """Scenario file or option problem, optionally located by line and column."""

    def __init__(self, message: str, *, line: int | None = None, column: int | None = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class AssemblyError(CapillaryLabError):
    """An assembled operator fails a structural check such as symmetry."""
