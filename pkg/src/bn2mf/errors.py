"""Exception types shared across the package."""


class NumericalError(ArithmeticError):
    """A computation produced a non-finite or otherwise invalid number.

    ``index`` locates the offending entry when known; ``term`` names the
    objective term or block involved.
    """

    def __init__(self, message, index=None, term=None):
        super().__init__(message)
        self.index = index
        self.term = term


class FitError(RuntimeError):
    """Every restart (or every candidate model) failed."""

    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = list(failures or [])


class ParseError(ValueError):
    """Malformed input file; the message carries the location."""


class ConfigError(ValueError):
    """Invalid run configuration."""
