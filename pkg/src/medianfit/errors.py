class MedianFitError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(MedianFitError, ValueError):
    """Invalid run, network or generator configuration."""


class DataError(MedianFitError, ValueError):
    """Input data is empty, non-finite or otherwise unusable."""


class IncompleteRunError(MedianFitError):
    """A run directory is missing an artifact that a command needs."""
