"""Exception hierarchy shared by every module.

The CLI maps ``ConfigError``/``ArgumentError`` to exit code 2 and the data
family (``DataError`` and subclasses, ``UndefinedMetricError``) to exit code 3.
"""


class HighDANError(Exception):
    pass


class ArgumentError(HighDANError, ValueError):
    """Bad argument value (out of range, wrong size)."""


class ConfigError(HighDANError, ValueError):
    """Configuration or schema violation; ``key`` names the offending field."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class StateError(HighDANError, RuntimeError):
    pass


class DataError(HighDANError):
    """Invalid data values (NaN/Inf, out-of-range labels)."""


class FormatError(DataError):
    """Scene directory / checkpoint file layout is wrong."""


class IntegrityError(DataError):
    """File contents disagree with the manifest."""


class NumericError(HighDANError, ArithmeticError):
    def __init__(self, message, term=None):
        super().__init__(message)
        self.term = term


class UndefinedMetricError(HighDANError, ArithmeticError):
    pass
