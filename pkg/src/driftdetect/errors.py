"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: configuration problems exit
with 2, data problems with 3, numerical failures with 4. The service maps
the same kinds onto HTTP responses.
"""


class DriftDetectError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1
    kind = "error"


class ConfigError(DriftDetectError):
    exit_code = 2
    kind = "config"


class DataError(DriftDetectError):
    exit_code = 3
    kind = "data"


class NumericalError(DriftDetectError):
    exit_code = 4
    kind = "numerical"


class ConfigConflict(ConfigError):
    """Mutually exclusive configuration entries were both supplied."""


class TiltInfeasible(NumericalError):
    """No exponential change of measure exists for the requested drift."""


class PriorExhausted(DataError):
    """A tabulated change-point prior ran out before monitoring ended."""


class QuadratureFailure(NumericalError):
    """Adaptive quadrature could not reach the requested tolerance."""


class BetaCollision(NumericalError):
    """The integral reduction needs distinct exponents beta1 != beta2."""


class DegenerateSeries(DataError):
    """Calibration input has a coordinate with zero-variance increments."""
