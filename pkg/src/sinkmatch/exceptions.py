"""Exception hierarchy shared by every sinkmatch module."""


class SinkmatchError(Exception):
    """Base class for all sinkmatch errors."""


class InvalidInput(SinkmatchError, ValueError):
    pass


class DimensionMismatch(SinkmatchError, ValueError):
    pass


class InvalidGlobal(InvalidInput):
    """The pooled global embedding is degenerate (zero vector)."""


class NumericalUnderflow(SinkmatchError, ArithmeticError):
    """A Gibbs kernel row or column vanished in linear-domain arithmetic.

    Retry with ``log_domain="on"``.
    """


class UnsupportedSize(SinkmatchError, ValueError):
    pass


class FormatError(SinkmatchError, ValueError):
    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class InvalidGroundTruth(SinkmatchError, ValueError):
    pass
