"""Exception hierarchy shared by every fcsolve module."""


class FcsolveError(Exception):
    """Base class for all errors raised by fcsolve."""


class ConfigError(FcsolveError, ValueError):
    """Invalid sizes, parameters or dimensions."""


class NoClosedForm(FcsolveError):
    """Raised when a loss has no closed-form tilted minimizer or conjugate."""


class NumericalError(FcsolveError):
    """A numerical routine failed to converge or produced non-finite values."""

    def __init__(self, message, **context):
        super().__init__(message)
        self.context = context


class InsufficientData(FcsolveError, ValueError):
    """Not enough points to fit a convergence rate."""


class ParseError(FcsolveError, ValueError):
    """Malformed input file."""

    def __init__(self, message, path=None, line=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.path = path
        self.line = line
        self.offset = offset
