"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operands have inconsistent dimensions."""


class DegenerateRankError(ValueError):
    """A requested rank exceeds the numerical rank of the input."""


class AlignmentDegenerateError(ValueError):
    """The loading tensor is (numerically) orthogonal to the tangent space,
    so the variance component vanishes and no confidence interval exists."""


class ConfigError(ValueError):
    """Malformed experiment configuration or input file."""


class ExperimentFailure(RuntimeError):
    """Too many replications failed for the aggregates to be trusted."""

    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports
