"""Exception types shared across the package."""


class SluiceError(Exception):
    """Base class for all package errors."""


class DimensionError(SluiceError):
    """Operand shapes are incompatible with the requested operation."""


class LabelError(SluiceError):
    """A label index lies outside the task's inventory."""


class ContractError(SluiceError):
    """An API was called out of order or with a violated precondition."""


class NumericsError(SluiceError):
    """A forward operation produced NaN or Inf from finite inputs."""


class InputError(SluiceError):
    """Provided data is empty or insufficient for the operation."""


class ParseError(SluiceError):
    """Malformed corpus text; message carries the offending line number."""


class ConfigError(SluiceError):
    """Unknown or ill-typed configuration key."""
