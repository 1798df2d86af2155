"""Exception types raised across the package."""


class AidTrackError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AidTrackError, ValueError):
    pass


class DegenerateProjectionError(AidTrackError):
    pass


class NothingVisibleError(AidTrackError):
    pass


class InsufficientDataError(AidTrackError, ValueError):
    pass


class NoPlaneFoundError(AidTrackError):
    pass


class NumericError(AidTrackError, ArithmeticError):
    pass


class ModelDegenerateError(AidTrackError):
    pass


class PipelineError(AidTrackError):
    pass
