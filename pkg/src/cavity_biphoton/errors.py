"""Exception types raised across the toolkit."""


class ParameterDomainError(ValueError):
    """An argument lies outside the domain where the formula is defined."""


class ConfigError(ValueError):
    """A configuration document is malformed; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class CapacityError(OverflowError):
    """Requested simulation would exceed the 64-bit event counter."""


class FitDegenerateError(RuntimeError):
    """The ratio curve carries no phase information.

    ``diagnostics`` holds the flat (constant) fit that was attempted.
    """

    def __init__(self, message: str, diagnostics: dict):
        self.diagnostics = diagnostics
        super().__init__(message)


class NoInterferenceError(ValueError):
    """Neither ECC orientation shows any interference dip."""


class HistogramFormatError(ValueError):
    """A histogram file is truncated, malformed, or geometrically incompatible."""
