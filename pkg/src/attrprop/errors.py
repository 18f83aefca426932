"""Exception hierarchy.

Each class carries the process exit code the CLI maps it to: 2 for bad
data, 3 for numeric or degenerate conditions.
"""


class AttrPropError(Exception):
    exit_code = 2


class InvalidInputError(AttrPropError, ValueError):
    pass


class OutOfDomainError(InvalidInputError):
    """A point lies on or outside the unit ball."""


class InsufficientDataError(InvalidInputError):
    pass


class UndefinedClassError(InvalidInputError):
    pass


class DataFormatError(AttrPropError, ValueError):
    """A file could not be turned into a valid matrix.

    ``path`` and ``line`` (1-based, when known) locate the problem.
    """

    def __init__(self, message, path=None, line=None):
        self.path = None if path is None else str(path)
        self.line = line
        where = ""
        if self.path is not None:
            where = self.path if line is None else f"{self.path}:{line}"
            where += ": "
        super().__init__(where + message)


class ParseError(DataFormatError):
    pass


class DimensionMismatchError(DataFormatError):
    pass


class NonBinaryError(DataFormatError):
    pass


class DegenerateInputError(AttrPropError, ValueError):
    exit_code = 3


class IllConditionedError(AttrPropError, ArithmeticError):
    exit_code = 3


class TopologyError(AttrPropError):
    exit_code = 3


class GenerationError(AttrPropError):
    exit_code = 3
