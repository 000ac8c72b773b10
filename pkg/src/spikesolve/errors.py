"""Exception hierarchy shared by every spikesolve module."""

from __future__ import annotations


class SpikeSolveError(Exception):
    """Base class for all spikesolve errors."""


class DomainError(SpikeSolveError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class PreconditionError(SpikeSolveError, ValueError):
    """A theorem or constructor hypothesis does not hold for the given input."""


class NumericalError(SpikeSolveError, RuntimeError):
    """A numerical routine broke down (singular system, non-finite values)."""


class ConvergenceError(NumericalError):
    """An iterative solver exhausted its budget before reaching its tolerance."""

    def __init__(self, message: str, *, last_gap: float, iterations: int) -> None:
        super().__init__(f"{message} (gap={last_gap:.3e} after {iterations} iterations)")
        self.last_gap = last_gap
        self.iterations = iterations


class ConfigError(SpikeSolveError, ValueError):
    """An experiment or settings file is malformed."""
