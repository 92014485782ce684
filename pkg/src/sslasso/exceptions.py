"""Exception hierarchy shared by the package."""


class SSLError(Exception):
    """Base class for errors raised by sslasso."""


class DataError(SSLError, ValueError):
    """Malformed or degenerate input data."""


class NumericalError(SSLError, ArithmeticError):
    """A fit or estimate produced a non-finite or singular quantity."""
