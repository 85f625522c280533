"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end.
"""


class SpodRomError(Exception):
    """Base class for all errors raised by spodrom."""

    exit_code = 1


class ConfigError(SpodRomError, ValueError):
    """Invalid pipeline configuration or argument range."""

    exit_code = 2


class DataError(SpodRomError, ValueError):
    """Problem with input data: missing file, bad shape, non-finite entries."""

    exit_code = 3


class FileMissingError(DataError, FileNotFoundError):
    pass


class ShapeMismatchError(DataError):
    pass


class NonFiniteError(DataError):
    pass


class NumericalError(SpodRomError, ArithmeticError):
    """Eigensolver failure, training divergence, non-finite activations."""

    exit_code = 4


class EigensolveError(NumericalError):
    pass


class DivergenceError(NumericalError):
    pass


class ProvenanceError(SpodRomError):
    """An artifact was produced from different upstream inputs."""

    exit_code = 5


class RankWarning(UserWarning):
    """The weighted Gram matrix of a reduced basis is numerically rank deficient."""
