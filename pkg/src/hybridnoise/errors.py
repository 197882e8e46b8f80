"""Exception hierarchy shared across the package."""


class HybridNoiseError(Exception):
    """Base class for all errors raised by this package."""


class InvalidParameterError(HybridNoiseError, ValueError):
    """A numeric argument violates a precondition (sign, range, finiteness)."""


class DimensionMismatchError(HybridNoiseError, ValueError):
    """Vector/matrix dimensions do not agree."""


class NotPositiveDefiniteError(HybridNoiseError, ValueError):
    """Cholesky factorization failed; ``pivot`` is the failing pivot index."""

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        super().__init__(message or f"matrix is not positive definite (pivot {pivot})")


class NonConvergenceError(HybridNoiseError, RuntimeError):
    """An iterative procedure exceeded its hard limit."""


class DegeneratePointError(HybridNoiseError, ArithmeticError):
    """All mixture components underflowed for a data point; ``row`` names it."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"all components underflow for data row {row}")


class EmptyClusterError(HybridNoiseError, ArithmeticError):
    """A component's effective count collapsed; ``component`` names it."""

    def __init__(self, component: int, effective_count: float):
        self.component = component
        self.effective_count = effective_count
        super().__init__(
            f"component {component} is empty (effective count {effective_count:g})"
        )


class NotEstimableError(HybridNoiseError, ValueError):
    """The mixture lacks the structure needed for the requested estimate."""


class UnsupportedDimensionError(HybridNoiseError, ValueError):
    """The operation is only defined for a specific data dimension."""


class ParseError(HybridNoiseError, ValueError):
    """A data file is malformed; ``line`` is the 1-based offending line."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GridMismatchError(HybridNoiseError, ValueError):
    """Two capacity curves do not share the same SNR grid."""
