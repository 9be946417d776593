"""Exception types shared across the library and mapped to CLI exit codes."""


class RankFactorError(Exception):
    """Base class for all library errors."""


class UsageError(RankFactorError):
    """Invalid flag combination or out-of-scope configuration. CLI exit code 1."""


class DataError(RankFactorError):
    """Malformed input data, dimension mismatch, or corrupt container. CLI exit code 2."""


class ParameterDomainError(RankFactorError, ValueError):
    """Sampler or special-function argument outside its domain."""


class NumericError(RankFactorError):
    """Non-finite value produced during inference. CLI exit code 3."""


class MetricError(RankFactorError):
    """Undefined evaluation metric, e.g. AUC on a single-class label vector."""
