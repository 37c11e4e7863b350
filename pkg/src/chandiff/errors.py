"""Exception types raised across the package."""


class ChandiffError(Exception):
    """Base class for all package errors."""


class InvalidShapeError(ChandiffError, ValueError):
    pass


class DegenerateInputError(ChandiffError, ValueError):
    pass


class DomainError(ChandiffError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class DegenerateChannelError(ChandiffError, ValueError):
    pass


class IdentifiabilityError(ChandiffError, ValueError):
    """The source statistics do not allow the requested blind estimate."""


class InvariantViolation(ChandiffError, RuntimeError):
    pass


class TrainingDiverged(ChandiffError, RuntimeError):
    pass


class ConfigError(ChandiffError, ValueError):
    pass


class ModelFileError(ChandiffError, ValueError):
    pass
