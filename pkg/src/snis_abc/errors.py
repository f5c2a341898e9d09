"""Exception types raised across the package."""


class SnisAbcError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SnisAbcError, ValueError):
    """Input array has the wrong shape, non-finite entries, or bad parameters."""


class EmptyBatchError(InvalidInputError):
    pass


class InsufficientSamplesError(SnisAbcError, ValueError):
    """An estimator needs more samples than it was given."""


class DominatedWeightError(SnisAbcError, ArithmeticError):
    """A single softmax weight is so close to one that leave-one-out is unstable."""


class ExperimentError(SnisAbcError, RuntimeError):
    """A Monte Carlo experiment could not be completed."""
