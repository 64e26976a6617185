"""Exception hierarchy."""


class MpcnError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(MpcnError, ValueError):
    """A numeric parameter is outside its admissible range."""


class DimensionError(MpcnError, ValueError):
    """Vector length or dimension is invalid or inconsistent."""


class DegenerateStateError(MpcnError, ValueError):
    """The state is a singular point of the kernel (e.g. the origin for MpCN)."""


class UnsupportedOperationError(MpcnError, TypeError):
    """The operation is not defined for this target or kernel."""


class ConfigError(MpcnError, ValueError):
    """Invalid run or experiment configuration."""


class CorruptTraceError(MpcnError, IOError):
    """A persisted trace could not be parsed."""

    def __init__(self, path, reason):
        super().__init__(f"{path}: {reason}")
        self.path = str(path)
        self.reason = reason


class TraceTooShortError(MpcnError, ValueError):
    """Trace has fewer states than the estimator requires."""
