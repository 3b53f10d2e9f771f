"""Exception hierarchy for smpc_lab."""

__all__ = ['SmpcError', 'DimensionMismatch', 'NonFiniteEntry', 'NotPositiveDefinite',
           'GridError', 'SingularR', 'StepTooLarge', 'NoConvergence', 'NotDominating',
           'HorizonExceedsRiccati', 'OutOfCycle', 'NonFiniteState', 'PreconditionViolated',
           'EmptyEnsemble', 'NonPositiveEstimate', 'UnstableClosedLoop', 'ScenarioError',
           'ParseError', 'ValidationError', 'UnknownKey']


class SmpcError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(SmpcError, ValueError):
    pass


class NonFiniteEntry(SmpcError, ValueError):
    pass


class NotPositiveDefinite(SmpcError, ValueError):
    pass


class GridError(SmpcError, ValueError):
    """A time quantity is not an integer multiple of the step."""


class SingularR(SmpcError, ArithmeticError):
    """R + D'PD is numerically singular (condition number above 1e12)."""


class StepTooLarge(SmpcError, ArithmeticError):
    """Riccati integration produced non-finite entries."""


class NoConvergence(SmpcError, ArithmeticError):
    pass


class NotDominating(SmpcError, ValueError):
    """G - P_inf is not positive semidefinite."""


class HorizonExceedsRiccati(SmpcError, ValueError):
    pass


class OutOfCycle(SmpcError, ValueError):
    pass


class NonFiniteState(SmpcError, ArithmeticError):
    pass


class PreconditionViolated(SmpcError, ValueError):
    pass


class EmptyEnsemble(SmpcError, ValueError):
    pass


class NonPositiveEstimate(SmpcError, ValueError):
    pass


class UnstableClosedLoop(SmpcError, ArithmeticError):
    pass


class ScenarioError(SmpcError):
    """Base class for scenario file problems."""


class ParseError(ScenarioError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)


class ValidationError(ScenarioError):
    def __init__(self, field, message=""):
        self.field = field
        super().__init__(f"{field}: {message}" if message else field)


class UnknownKey(ScenarioError):
    def __init__(self, key, where="scenario"):
        self.key = key
        super().__init__(f"unknown key {key!r} in {where}")
