"""Exception hierarchy shared across the engine."""


class IdsfError(Exception):
    """Base class for all engine errors."""


class ConfigError(IdsfError):
    """Invalid configuration (bad key, bad value, bad flag combination)."""


class ContractError(IdsfError):
    """An operation was called outside its contract."""


class DimensionError(ContractError):
    """Shape mismatch between operands."""


class NumericError(IdsfError):
    """A computation produced NaN/Inf or otherwise left the finite domain."""


class DataError(IdsfError):
    """Base class for ingestion problems."""


class ParseError(DataError):
    """Malformed record in a text input; carries the 1-based line number."""

    def __init__(self, message, line_number=None):
        super().__init__(message)
        self.line_number = line_number


class EmptyInputError(DataError):
    """An input file contained no usable records."""


class FormatError(DataError):
    """Binary feature file violates the on-disk format."""


class MappingError(DataError):
    """An id in a sidecar file is unknown to the dataset."""


class SamplingError(IdsfError):
    """A bounded-retry sampling procedure failed to find a valid sample."""
