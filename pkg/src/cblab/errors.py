"""Exception types shared across the package."""


class CBLabError(Exception):
    """Base class for package errors."""


class InadmissibleMeasureError(CBLabError):
    """A jump measure fails the integrability required by its role."""


class InternalInconsistencyError(CBLabError):
    """A divergent integral was reached that the type invariants should forbid."""


class UndeterminedTailError(CBLabError):
    """A numeric query needs tail information the measure does not carry."""


class EmptyTailError(CBLabError):
    """Tail sampling was requested from a region with zero mass."""


class FirstMomentInfiniteError(CBLabError):
    """The effective drift needs integral_1^inf z m(dz) < inf and it diverges."""


class SolverStallError(CBLabError):
    """Adaptive ODE stepping underflowed; carries the partial solution."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class CannotShiftError(CBLabError):
    """No shift point makes the moment function satisfy the product conditions."""


class NoJumpPossibleError(CBLabError):
    """Jump-source selection was asked for while every big-jump rate is zero."""


class InsufficientTailError(CBLabError):
    """Too few tail exceedances for a stable tail-index estimate."""
