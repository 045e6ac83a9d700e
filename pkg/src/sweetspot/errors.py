"""Exception types raised across the package."""


class InvalidInputError(ValueError):
    """An argument violates an operation's precondition."""


class FormatError(InvalidInputError):
    """A text input could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GridFormatError(FormatError):
    """A grid, maze or path text file could not be parsed."""


class RecordFormatError(FormatError):
    """A GUI record, sample dump or manifest line could not be parsed."""


class NoPathError(InvalidInputError):
    """The goal of a maze is unreachable from its start."""


class DegenerateDirectionError(ArithmeticError):
    """The binary gradient direction has (numerically) zero norm."""


class NumericError(FloatingPointError):
    """A non-finite value appeared in a gradient computation."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)
