"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2), numerical
failures from :class:`NumericError` (exit code 3).
"""


class SccError(Exception):
    """Base class for all package errors."""


class InputError(SccError):
    pass


class NumericError(SccError):
    pass


class ConfigError(SccError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class InvalidMesh(InputError):
    pass


class DomainMismatch(InputError):
    pass


class GridMismatch(InputError):
    pass


class DegenerateTriangle(NumericError):
    pass


class OrderTooHigh(NumericError):
    pass


class SingularSystem(NumericError):
    pass


class AllInvalid(NumericError):
    pass


class NotPD(NumericError):
    pass


class NoPositiveEigenvalues(NumericError):
    pass


class DegenerateCovariance(NumericError):
    pass
