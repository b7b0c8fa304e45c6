"""Exception hierarchy shared by all modules."""


class MmfouError(Exception):
    """Base class for every error raised by this package."""


class DomainError(MmfouError, ValueError):
    """Argument outside the mathematical domain of a function."""


class ValidationError(MmfouError, ValueError):
    """Invalid parameter vector, configuration or input data."""


class NumericError(MmfouError, ArithmeticError):
    """A numerical procedure failed to converge or became ill-conditioned."""


class EstimationError(MmfouError):
    """The GMM estimator cannot be applied to the supplied data."""
