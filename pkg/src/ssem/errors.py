"""Exception and warning types raised by the solver stack."""


class SSEMError(Exception):
    """Base class for all errors raised by this package."""


class InvalidSymbolError(SSEMError, ValueError):
    pass


class UnsupportedOrderError(SSEMError, ValueError):
    pass


class OutOfDomainError(SSEMError, ValueError):
    pass


class DimensionError(SSEMError, ValueError):
    pass


class DegenerateDomainError(SSEMError, ValueError):
    pass


class TooCoarseError(SSEMError, ValueError):
    pass


class DataError(SSEMError, ValueError):
    pass


class TooLargeForDenseError(SSEMError, MemoryError):
    """Raised when an explicit matrix would exceed the dense size cap.

    Large problems should go through the matrix-free PCG path instead.
    """


class PreconditionerFailure(SSEMError, RuntimeError):
    pass


class NonConvergenceError(SSEMError, RuntimeError):
    """CG hit its iteration cap. ``history`` holds the residual sequence."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = [] if history is None else list(history)


class BreakdownError(SSEMError, FloatingPointError):
    pass


class InsufficientDataError(SSEMError, ValueError):
    pass


class DegenerateMaskError(SSEMError, ValueError):
    pass


class OutOfRangeError(SSEMError, ValueError):
    pass


class RankDeficiencyWarning(RuntimeWarning):
    """A diagonal entry of R is negligible relative to the largest one."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index
