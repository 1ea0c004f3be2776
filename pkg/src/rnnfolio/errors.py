"""Exception hierarchy shared across the package.

Each class maps to one CLI exit-code family (see cli module).
"""


class RnnfolioError(Exception):
    """Base class for all package errors."""


class DimensionError(RnnfolioError):
    """Operand shapes are incompatible."""


class ConfigError(RnnfolioError):
    """Invalid configuration value or unknown key."""


class DataError(RnnfolioError):
    """Input data violates an invariant (bad bar, empty panel, ...)."""


class ParseError(DataError):
    """Malformed input file; message carries the offending line number."""


class MetricError(RnnfolioError):
    """A metric precondition was violated (e.g. zero actual in MAPE)."""


class UndefinedMetricError(MetricError):
    """Metric is mathematically undefined on this input (zero variance)."""


class TrainingDivergedError(RnnfolioError):
    """Loss became non-finite; message reports epoch and batch."""
