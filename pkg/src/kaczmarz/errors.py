"""Error types shared across the package."""


class DegenerateBlock(ValueError):
    """A row block is numerically rank deficient (linearly dependent rows)."""


class NotPositiveDefinite(ValueError):
    """A matrix expected to be symmetric positive definite has a pivot <= 0."""


class RankDeficient(ValueError):
    """A matrix required to have full rank does not."""


class ZeroRow(ValueError):
    """A matrix contains an all-zero row where nonzero rows are required."""


class AllParallel(RuntimeError):
    """Every candidate row is parallel to the reference row; angle weights vanish."""


class DegenerateWeights(ValueError):
    """A sampling weight vector has no positive mass."""
