"""Exception hierarchy shared by all sbprune modules."""


class SbpruneError(Exception):
    """Base class for all errors raised by this package."""


class UsageError(SbpruneError):
    """API misuse: wrong call order, non-scalar loss, missing gradients."""


class InputError(SbpruneError):
    """Invalid runtime input: bad token id, label out of range, empty dataset."""


class DimensionError(SbpruneError):
    """Operand shapes are incompatible for the requested operation."""


class NumericError(SbpruneError):
    """A forward operation produced NaN/Inf from finite inputs (overflow)."""


class ConfigError(SbpruneError):
    """An encoder or training configuration violates its constraints."""


class PlanError(SbpruneError):
    """A pruning plan is invalid or does not match the target model."""


class ParseError(SbpruneError):
    """A dataset file failed to parse; message names the offending line."""

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class FormatError(SbpruneError):
    """A checkpoint file does not carry the expected magic/version."""


class CorruptionError(SbpruneError):
    """A checkpoint file is structurally valid but its contents are damaged."""


class UndefinedMetricError(SbpruneError):
    """A correlation metric is undefined for the given inputs (constant side)."""
