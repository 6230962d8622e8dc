"""Exception hierarchy shared by the solvers, functionals and CLI."""

from __future__ import annotations


class EntroflowError(Exception):
    """Base class for all package errors."""


class DomainError(EntroflowError, ValueError):
    """An argument lies outside the domain of a formula (e.g. h <= 0)."""


class ConfigurationError(EntroflowError, ValueError):
    """Parameters or scenario settings violate a declared invariant."""


class NumericalFailure(EntroflowError, ArithmeticError):
    """An operation produced non-finite values."""


class StepFailure(EntroflowError, RuntimeError):
    """A time step could not be completed even at the minimum step size.

    ``diagnostics`` carries what the controller saw on the last attempt:
    the Newton residual history, the minimum film height and the step size.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ValidationError(EntroflowError, ValueError):
    """Scenario text failed validation; ``errors`` lists every problem found."""

    def __init__(self, errors: list[tuple[str, str]]):
        self.errors = list(errors)
        lines = [f"{path}: {msg}" if path else msg for path, msg in self.errors]
        super().__init__("invalid scenario:\n  " + "\n  ".join(lines))
