"""Exception types shared across the package.

The CLI maps these onto its exit-code taxonomy: usage errors exit 1,
DataError (and subclasses) exit 2, NumericError exit 3.
"""


class C2VError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(C2VError, ValueError):
    """Operands have incompatible shapes."""


class DataError(C2VError, ValueError):
    """Invalid input data: parse failures, broken invariants, bad configs."""


class SamplingError(DataError):
    """A rejection sampler could not make progress."""


class NumericError(C2VError, RuntimeError):
    """Training or evaluation produced non-finite numbers."""
