"""Exception types shared across the package."""


class DualstageError(Exception):
    """Base class for all errors raised by this package."""


class ShapeMismatchError(DualstageError):
    """Operands have incompatible shapes."""


class ConfigurationError(DualstageError):
    """An option or hyperparameter is outside its valid range."""


class ContractError(DualstageError):
    """A caller violated an API precondition."""


class DataError(DualstageError):
    """Input data could not be parsed or is structurally invalid."""
