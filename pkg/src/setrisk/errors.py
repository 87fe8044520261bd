"""Exceptions and non-finite result signals."""

from __future__ import annotations

import enum


class PreconditionError(ValueError):
    """An input violates a documented precondition (CLI exit code 2)."""


class ConvergenceError(RuntimeError):
    """An iterative solver exhausted its budget."""


class Signal(enum.Enum):
    """Distinct markers for results that are not finite numbers or sets.

    ``MINUS_INFINITY``: a risk value equal to minus infinity.
    ``PLUS_INFINITY``: a divergence equal to plus infinity (top element).
    ``NOT_FINITE``: a set-valued risk equal to the whole space.
    ``IMPROPER``: an objective that is identically plus infinity.
    """

    MINUS_INFINITY = "-inf"
    PLUS_INFINITY = "+inf"
    NOT_FINITE = "not-finite"
    IMPROPER = "improper"

    def __repr__(self) -> str:
        return f"Signal.{self.name}"


MINUS_INFINITY = Signal.MINUS_INFINITY
PLUS_INFINITY = Signal.PLUS_INFINITY
NOT_FINITE = Signal.NOT_FINITE
IMPROPER = Signal.IMPROPER
