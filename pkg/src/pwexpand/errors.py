"""Exception hierarchy shared by all modules."""


class PwexpandError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PwexpandError, ValueError):
    """A point or parameter lies outside the domain of an operation."""


class NullSetError(PwexpandError, ValueError):
    """A point lies in the negligible set where no branch is defined."""


class InvalidExpansionError(PwexpandError, ValueError):
    pass


class NoPreimageError(PwexpandError, ValueError):
    pass


class HypothesisViolation(PwexpandError, ValueError):
    pass


class NumericError(PwexpandError, ArithmeticError):
    pass


class GridSizeError(PwexpandError, ValueError):
    pass


class DegenerateCellError(PwexpandError, RuntimeError):
    pass


class ConvergenceError(PwexpandError, RuntimeError):
    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class ResolutionError(PwexpandError, ValueError):
    pass


class BoundaryError(PwexpandError, ValueError):
    pass


class ConsistencyError(PwexpandError, RuntimeError):
    pass


class SamplingError(PwexpandError, ValueError):
    pass


class InsufficientDataError(PwexpandError, RuntimeError):
    pass


class ModelFileError(PwexpandError, ValueError):
    pass
