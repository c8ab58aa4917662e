"""Exception hierarchy shared by every module.

Each class carries a short ``category`` string; the CLI prints it and maps it
to a distinct exit code.
"""


class TTVOSError(Exception):
    category = "error"
    exit_code = 1


class DimensionError(TTVOSError, ValueError):
    category = "dimension"
    exit_code = 5


class ConfigurationError(TTVOSError, ValueError):
    category = "config"
    exit_code = 3


class UsageError(TTVOSError, RuntimeError):
    category = "usage"
    exit_code = 2


class InputError(TTVOSError, ValueError):
    category = "input"
    exit_code = 4


class NumericalError(TTVOSError, ArithmeticError):
    category = "numerical"
    exit_code = 6
