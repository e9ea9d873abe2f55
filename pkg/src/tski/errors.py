"""Exception types shared across the package."""


class TskiError(Exception):
    """Base class for all package-specific errors."""


class NotPositiveDefinite(TskiError):
    """A matrix required to be positive definite is not."""


class NonSymmetric(TskiError):
    """A matrix required to be symmetric is not."""


class ConstantColumn(TskiError):
    """A data column has (numerically) zero standard deviation."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"column {index} is constant")


class DimensionMismatch(TskiError):
    """Operands have incompatible shapes."""


class ShrinkageFailed(TskiError):
    """No shrinkage level on the grid satisfies the eigenvalue floor."""


class NotConverged(TskiError):
    """An iterative solver hit its iteration cap before converging."""


class EmptyData(TskiError):
    """An operation received zero rows of data."""


class TooFewObservations(TskiError):
    """Not enough rows for the requested subsampling."""


class LengthMismatch(TskiError):
    """Vectors required to have equal length do not."""


class InsufficientLength(TskiError):
    """A series is too short to form the requested lags."""


class EmptyGrid(TskiError):
    """An epsilon grid required to be nonempty is empty."""


class MalformedCsv(TskiError):
    """A CSV input violates the expected layout."""

    def __init__(self, row, col, message):
        self.row = row
        self.col = col
        super().__init__(f"row {row}, column {col}: {message}")


class UnknownTcode(TskiError):
    """A transform code outside 1..7 was supplied."""


class NonPositiveForLog(TskiError):
    """A log-based transform was requested on non-positive values."""


class NonPositiveCpi(TskiError):
    """The price-index series used for inflation has non-positive entries."""


class InsufficientHistory(TskiError):
    """The panel is too short for even one rolling window."""
