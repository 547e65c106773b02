"""Exception types shared across the package."""

from __future__ import annotations


class SizeLimitError(ValueError):
    """Input is larger than an enumeration routine is allowed to handle."""


class DomainError(ValueError):
    """Argument lies outside the mathematical domain of an operation."""


class PreconditionError(DomainError):
    """Moment table violates the hypotheses of a closed-form theorem."""


class UnsupportedMomentError(KeyError):
    """No closed form is available for the requested moment."""


class NumericalDegeneracyError(ArithmeticError):
    """A message or belief collapsed to (numerically) zero."""

    def __init__(self, message: str, edge: tuple[int, int] | None = None):
        super().__init__(message)
        self.edge = edge


class InfiniteEnergyError(ArithmeticError):
    """Belief mass sits on a zero entry of an edge-weight matrix."""


class DegenerateBeliefError(NumericalDegeneracyError):
    """An unnormalized belief summed to zero and cannot be normalized."""


class BranchCutWarning(RuntimeWarning):
    """Complex-log terms left an imaginary residue above tolerance."""
