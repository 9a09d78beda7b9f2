"""Exception types shared across the package."""


class DensityEqError(Exception):
    """Base class for all package-specific errors."""


class DomainError(DensityEqError, ValueError):
    """An input violates a documented precondition."""


class InfiniteWaitError(DensityEqError):
    """A wait time is infinite (no drivers in a region with positive size)."""


class ConvergenceError(DensityEqError):
    """An iterative solver failed to converge; carries diagnostic state."""

    def __init__(self, message: str, state: dict | None = None):
        super().__init__(message)
        self.state = state or {}


class BracketError(DensityEqError):
    """A root bracket could not be established."""


class EstimationError(DensityEqError):
    """Base class for estimator failures."""


class RankDeficientError(EstimationError):
    """Design matrix is rank deficient; names the offending columns."""

    def __init__(self, columns: list[str]):
        super().__init__(f"design matrix is rank deficient; offending columns: {columns}")
        self.columns = columns


class SeparationError(EstimationError):
    """Logit response is (quasi-)separable; the MLE diverges."""


class UnidentifiedKinkError(EstimationError):
    """The kink location is not identified (flat profile objective)."""
