"""Exception hierarchy shared by every module."""


class RGCError(Exception):
    """Base class for all errors raised by rgcnet."""


class DimensionError(RGCError, ValueError):
    """Operand shapes do not conform."""


class ParameterError(RGCError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DomainError(RGCError, ValueError):
    """Input values are outside the domain of the operation."""


class NumericError(RGCError, ArithmeticError):
    """A computation produced NaN/Inf or failed to converge.

    ``partial`` carries the best result available at the point of failure.
    """

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigurationError(RGCError, ValueError):
    """A model or experiment is assembled from incompatible parts."""


class ContractError(RGCError, ValueError):
    """A caller violated an operation precondition."""


class IngestionError(RGCError, OSError):
    """A dataset on disk is missing files or is malformed."""


class StratificationError(RGCError, ValueError):
    """A fold cannot be stratified (for example it holds a single class)."""
