"""Exception hierarchy shared by the library and the CLI."""


class DRMKSDError(Exception):
    """Base class for all errors raised by drmksd."""


class InvalidArgumentError(DRMKSDError, ValueError):
    """Shapes, ranges or option values that violate a precondition."""


class DegenerateBandwidthError(InvalidArgumentError):
    """All points coincide, so no data-driven bandwidth exists."""


class NotFittedError(DRMKSDError, RuntimeError):
    """A nuisance model was queried before ``fit``."""


class ConvergenceError(DRMKSDError, RuntimeError):
    """An iterative fit cannot converge (e.g. single-class unpenalized logistic)."""


class EstimationImpossibleError(DRMKSDError):
    """The data cannot support the estimator, e.g. a fold without treated units."""


class InferenceUnavailableError(DRMKSDError):
    """The sandwich covariance cannot be formed; ``gamma`` holds the offending matrix."""

    def __init__(self, message, gamma=None):
        super().__init__(message)
        self.gamma = gamma


class NumericalError(DRMKSDError, ArithmeticError):
    """Non-finite objective values or internally inconsistent quantities."""
