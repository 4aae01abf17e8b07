"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class EtrError(Exception):
    """Base class for all package errors."""


class InvalidInput(EtrError):
    """Malformed or inconsistent input data."""


class SolverFailure(EtrError):
    """A numerical routine failed to converge.

    Carries the residual that was left when the iteration cap was hit so
    callers can decide whether the partial answer is still usable.
    """

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class InfeasibleProblem(EtrError):
    """The feasible set was detected to be empty."""


class ExtractionFailure(EtrError):
    """No feasible minimizer candidate could be recovered from a PSD solution.

    ``best_attempt`` holds the least-violating vector that was found.
    """

    def __init__(self, message: str, best_attempt=None):
        super().__init__(message)
        self.best_attempt = best_attempt


class CertificateSearchError(EtrError):
    """Multiplier search failed at the requested slack level.

    ``feasible_epsilon`` is the smallest slack found (by bisection) at which
    a certificate does exist, or ``None`` if none was found at all.
    """

    def __init__(self, message: str, feasible_epsilon=None):
        super().__init__(message)
        self.feasible_epsilon = feasible_epsilon
