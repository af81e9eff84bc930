"""Exception types shared across the package."""

from __future__ import annotations


class DPINNError(Exception):
    """Base class for all package errors."""


class InvalidConfiguration(DPINNError, ValueError):
    """A setting is out of range or inconsistent.

    ``field`` names the offending configuration key when one applies.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class InvalidInput(DPINNError, ValueError):
    """An argument has the wrong shape or lies outside the valid region."""


class NumericalFailure(DPINNError, ArithmeticError):
    """A non-finite value appeared, or an iterative method did not converge.

    ``point`` and ``cell`` locate the failure when known; ``history`` holds
    residuals for iterative solvers; ``params`` holds the last finite
    parameters when raised from a training loop.
    """

    def __init__(self, message: str, *, point=None, cell=None, history=None, params=None):
        super().__init__(message)
        self.point = point
        self.cell = cell
        self.history = history
        self.params = params


class OutOfValidity(DPINNError, ValueError):
    """A reference solution was requested outside the region where it holds."""
