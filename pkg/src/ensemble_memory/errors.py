"""Exception hierarchy shared by the library and the command line front end."""


class EnsembleMemoryError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(EnsembleMemoryError, ValueError):
    """Invalid physical parameters, interaction mode or run configuration."""


class NumericalError(EnsembleMemoryError, ArithmeticError):
    """A solver or integrator failed to meet its accuracy contract."""


class StepSizeError(ConfigurationError):
    """Requested integration step exceeds the stability/accuracy bound."""


class UndefinedQuantityError(EnsembleMemoryError, ValueError):
    """A normalized quantity is undefined for the given inputs (e.g. division by zero rate)."""
