"""Exception hierarchy shared by all qunit modules."""


class QUnitError(Exception):
    """Base class for every error raised by qunit."""


class QasmSyntaxError(QUnitError):
    """Malformed subroutine source."""

    def __init__(self, message, line=None, column=None, expected=None):
        self.line = line
        self.column = column
        self.expected = expected
        where = f"line {line}, col {column}: " if line is not None else ""
        hint = f" (expected {expected})" if expected else ""
        super().__init__(f"{where}{message}{hint}")


class UnknownGate(QUnitError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"unknown gate {name!r}")


class IndexOutOfRange(QUnitError, IndexError):
    pass


class ArityMismatch(QUnitError, ValueError):
    pass


class BindingError(QUnitError, ValueError):
    """Parameter value outside the domain a subroutine accepts."""


class InvalidPosition(QUnitError, IndexError):
    pass


class IllFormedResult(QUnitError, ValueError):
    pass


class DimensionMismatch(QUnitError, ValueError):
    pass


class InvalidState(QUnitError, ValueError):
    """Matrix violates the density-matrix invariants."""


class NotDiagonal(QUnitError, ValueError):
    pass


class TooLarge(QUnitError, ValueError):
    pass


class NotCoprime(QUnitError, ValueError):
    pass


class ExecutorFailure(QUnitError, RuntimeError):
    pass


class NotPSD(QUnitError, ValueError):
    pass


class DegenerateExpected(QUnitError, ValueError):
    pass


class UnsupportedFunctional(QUnitError, ValueError):
    pass


class IncompatibleAssertion(QUnitError, ValueError):
    pass


class BudgetExceeded(QUnitError):
    """Selected protocol needs more circuit configurations than the cap allows."""
