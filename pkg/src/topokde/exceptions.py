"""Exception types raised by topokde."""


class TopoKDEError(Exception):
    """Base class for all errors raised by this package."""


class NonPositiveBandwidth(TopoKDEError, ValueError):
    pass


class NegativeInput(TopoKDEError, ValueError):
    pass


class EmptyInput(TopoKDEError, ValueError):
    pass


class EmptySample(TopoKDEError, ValueError):
    pass


class DegenerateSample(TopoKDEError, ValueError):
    """The sample has zero range, so no data-adaptive bandwidth set exists."""


class ComponentCountMismatch(TopoKDEError, RuntimeError):
    pass


class GridTooShort(TopoKDEError, ValueError):
    pass


class InvalidFamily(TopoKDEError, ValueError):
    pass


class EmptyRecords(TopoKDEError, ValueError):
    pass


class ParseError(TopoKDEError, ValueError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)
