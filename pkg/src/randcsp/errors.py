"""Exception types shared across the package."""


class CSPError(Exception):
    """Base class for all package errors."""


class OverlapError(CSPError):
    """Two partial assignments share a variable."""


class PinningViolation(CSPError):
    """A pinning completes the forbidden configuration of some constraint."""


class BudgetExceeded(CSPError):
    """An enumeration or construction would exceed its configured work limit."""

    def __init__(self, message, used=None):
        super().__init__(message)
        self.used = used


class InfeasibleCount(CSPError):
    """More distinct hyperedges were requested than exist."""


class EmptySupport(CSPError):
    """A conditional distribution has no satisfying assignment."""


class Unsatisfiable(EmptySupport):
    """The formula has no satisfying assignment."""


class NumericalFailure(CSPError):
    """The LP backend could not produce a certified verdict."""


class NoFeasibleCell(CSPError):
    """No feasible ratio window was found (should be impossible for a satisfiable formula)."""


class ZeroDenominator(CSPError):
    """A random path reached a node whose LP value is zero."""


class InputError(CSPError):
    """Malformed instance file or configuration."""
