"""Exception hierarchy shared by all pipeline stages."""


class CollimsimError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(CollimsimError, ValueError):
    """A parameter or configuration value is out of its valid range."""


class UsageError(CollimsimError, ValueError):
    """Arguments are individually valid but inconsistent (e.g. shape mismatch)."""


class CalibrationError(CollimsimError, RuntimeError):
    """Scatter magnitude calibration could not bracket or reach its target."""


class ImageIOError(CollimsimError, OSError):
    """An image file is malformed, unsupported or could not be written."""
