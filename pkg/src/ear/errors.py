"""Exception hierarchy shared across the package.

Everything derives from EarError so callers can catch the whole family;
the leaf classes distinguish failure kinds that contracts and the CLI
exit codes care about.
"""


class EarError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(EarError, ValueError):
    """Operands disagree on vector/feature dimensionality."""


class CapacityError(EarError, ValueError):
    """A requested configuration exceeds a hard resource bound."""


class ArgumentError(EarError, ValueError):
    """An argument violates a precondition (empty list, bad range, ...)."""


class StateError(EarError, RuntimeError):
    """Operation invoked on an object in the wrong state."""


class CalibrationError(EarError, RuntimeError):
    """Score calibration is impossible on the given data."""


class NumericError(EarError, ArithmeticError):
    """An iterative numeric routine failed to converge or blew up."""


class TrainingError(EarError, RuntimeError):
    """Optimization diverged or violated its contract."""


class GrowthError(EarError, RuntimeError):
    """Architecture growth could not produce a usable model."""


class MetricError(EarError, ValueError):
    """A metric is undefined for the given inputs."""


class ConfigError(EarError, ValueError):
    """Configuration file/value is invalid or out of range."""


class FeatureFileError(EarError, ValueError):
    """Base class for feature/model container parse failures."""


class BadMagicError(FeatureFileError):
    """File does not start with the expected magic bytes."""


class VersionError(FeatureFileError):
    """File carries an unsupported container version."""


class TruncatedFileError(FeatureFileError):
    """File ends before the header-promised payload."""


class NonFiniteError(FeatureFileError):
    """Payload contains NaN or infinite values."""
