"""Exception types raised across the package."""


class AbpError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AbpError, ValueError):
    """Invalid array, grid, schedule or experiment configuration."""


class DomainError(AbpError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ContractError(AbpError, ValueError):
    """Shapes or preconditions of a call are violated."""


class DegenerateMeasurementError(AbpError, ArithmeticError):
    """Both beam powers of a pair are zero, so no ratio exists."""


class EstimationIncompleteError(AbpError, RuntimeError):
    """A probing schedule does not contain every beam needed to locate a pair."""

    def __init__(self, message, missing_pairs=()):
        super().__init__(message)
        self.missing_pairs = tuple(missing_pairs)


class TrainingError(AbpError, ValueError):
    """Quantizer training was given unusable data."""
