"""Exception hierarchy shared by the library and the CLI.

The CLI maps :class:`DataError` to exit code 3 and :class:`NumericalError`
to exit code 4.
"""


class SpecterError(Exception):
    """Base class for all errors raised by this package."""


class DataError(SpecterError, ValueError):
    """Input data is malformed or violates a documented precondition."""


class DomainError(DataError):
    """Shape or value outside the domain of an operation (e.g. empty matrix)."""


class PreconditionError(DataError):
    """A numerical precondition (orthonormality, symmetry, definiteness) fails."""


class DegenerateInputError(DataError):
    """Input is well-formed but carries no usable information."""


class ParseError(DataError):
    """A matrix or config file could not be parsed."""

    def __init__(self, msg, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(msg + where)


class NumericalError(SpecterError, ArithmeticError):
    """A numerical procedure failed to produce a trustworthy result."""


class SingularityError(NumericalError):
    """A linear operator is singular or too close to singular to invert."""


class NonConvergenceError(NumericalError):
    """An iteration did not reach its tolerance within the iteration budget."""

    def __init__(self, msg, trace=None):
        self.trace = list(trace) if trace is not None else []
        super().__init__(msg)
