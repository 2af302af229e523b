"""Exception types shared across the package."""


class CisError(Exception):
    """Base class for all package errors."""


class DomainError(CisError, ValueError):
    """A state left the domain on which the model coefficients are defined."""


class SingularCovariance(CisError, ValueError):
    pass


class DegenerateBridge(CisError, ValueError):
    """Bridge evaluated at or beyond its terminal time."""


class DimensionError(CisError, ValueError):
    pass


class UnsupportedFunctional(CisError, TypeError):
    pass


class AllZeroWeights(CisError, RuntimeError):
    pass


class ZeroBarDensity(CisError, RuntimeError):
    pass


class ConfigError(CisError, ValueError):
    pass


class EmptyInput(CisError, ValueError):
    pass
