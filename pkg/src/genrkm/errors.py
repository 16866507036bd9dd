"""Exception types shared across the package."""


class GenRKMError(Exception):
    """Base class for all errors raised by genrkm."""


class ShapeError(GenRKMError, ValueError):
    pass


class ConvergenceError(GenRKMError, RuntimeError):
    pass


class NumericError(GenRKMError, FloatingPointError):
    """A non-finite value appeared where finite values are required."""


class RankError(GenRKMError, ValueError):
    """An eigenvalue is too small to invert for encoding or generation."""


class DegenerateSpectrumError(GenRKMError, ValueError):
    """The kernel sum has no usable (strictly positive) spectrum."""


class UsageError(GenRKMError, ValueError):
    pass


class TrainingDivergedError(GenRKMError, RuntimeError):
    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace if trace is not None else []


class FormatError(GenRKMError, ValueError):
    """Malformed input file or model container."""
