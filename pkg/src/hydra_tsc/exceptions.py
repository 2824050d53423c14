"""Exception hierarchy.

Every error raised deliberately by the package derives from
:class:`HydraError`, so callers (the CLI in particular) can map them to exit
codes without catching unrelated bugs.
"""


class HydraError(Exception):
    """Base class for all package errors."""

    exit_code = 2


class ConfigError(HydraError, ValueError):
    """Invalid hyperparameter combination."""

    exit_code = 3


class ParseError(HydraError, ValueError):
    """A data or model file could not be parsed."""

    def __init__(self, message, lineno=None):
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
        self.lineno = lineno


class LengthMismatch(HydraError, ValueError):
    pass


class DegenerateLabels(HydraError, ValueError):
    pass


class SeriesTooShort(HydraError, ValueError):
    pass


class DegenerateKernel(HydraError, ValueError):
    pass


class BankMismatch(HydraError, ValueError):
    """Feature or series dimensions do not match a fitted bank or model."""


class NonFiniteInput(HydraError, ValueError):
    pass


class InsufficientData(HydraError, ValueError):
    exit_code = 3


class NoCommonDatasets(HydraError, ValueError):
    pass
