"""Exception hierarchy.

Configuration problems and numerical failures are kept apart so the command
line front end can map them to distinct exit codes.
"""


class AbcError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(AbcError, ValueError):
    """Invalid run configuration (unknown model, bad flag, shape mismatch)."""


class NumericalError(AbcError, ArithmeticError):
    """A computation could not be carried out on the data at hand."""


class DegenerateBandwidthError(NumericalError):
    pass


class DegenerateTableError(NumericalError):
    pass


class UnderdeterminedRegressionError(NumericalError):
    pass


class EmptyNeighborhoodError(NumericalError):
    pass


class DegenerateSampleError(NumericalError):
    pass


class DomainError(AbcError, ValueError):
    """A value lies outside the domain of a transformation."""


class TransformNotApplicable(AbcError):
    """A candidate summary-statistic transformation cannot be used."""

    def __init__(self, reason):
        super().__init__(reason)
        self.reason = reason


class ModelSupportError(AbcError, ValueError):
    """Observed point outside the support of an analytic model."""
