"""Exceptions raised by the double-spend simulator."""

from __future__ import annotations


class SimulationError(Exception):
    """Base class for simulator failures."""


class BoundExhaustedError(SimulationError):
    """A global counter or store reached its configured bound.

    The engine turns this into a run termination, it never escapes `run`.
    """

    def __init__(self, bound: str, limit: int) -> None:
        """Initialize the error.

        Args:
            bound: Name of the bound that was hit, e.g. ``"max_blocks"``.
            limit: The configured value of that bound.
        """
        super().__init__(f"{bound} exhausted at {limit}")
        self.bound = bound
        self.limit = limit


class InvalidStatusTransitionError(SimulationError):
    """A transaction status change not allowed by the pool protocol."""


class ChainInvariantError(SimulationError):
    """A blockchain view violates its length, tree or longest-chain properties."""


class InvariantViolationError(SimulationError):
    """An audited run reached a state breaking a safety property."""
