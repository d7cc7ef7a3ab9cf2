"""Exception types raised across the package."""


class ZeroVector(ValueError):
    """An operation needed a nonzero load vector and got the origin."""


class OutOfRange(ValueError):
    """An adversary vector left the unit cube."""


class OracleTooLarge(RuntimeError):
    """The offline oracle would have to enumerate too many assignments."""


class EnumerationTooLarge(OracleTooLarge):
    pass


class NondeterministicAlgorithm(TypeError):
    pass


class ParseError(ValueError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {col})" if col is not None else ")")
        super().__init__(message + where)


class RangeError(ValueError):
    """A job entry lies outside [0, 1]."""
