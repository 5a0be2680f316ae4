"""Exception hierarchy.

Validation problems (bad input, violated preconditions) derive from
``ValidationError``; failures of a numerical procedure on valid input derive
from ``NumericalError``. The CLI maps the two families to exit codes 1 and 2.
"""


class ValidationError(ValueError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class NumericalError(ArithmeticError):
    pass


class UndefinedShareError(NumericalError):
    pass


class BoundaryError(NumericalError):
    pass


class UndefinedRateError(NumericalError):
    pass


class InfeasibleRatesError(NumericalError):
    pass


class CalibrationInfeasibleError(NumericalError):
    pass


class NoParetoSteadyStateError(NumericalError):
    pass


class GridDomainError(NumericalError):
    pass


class DivergentMeanError(NumericalError):
    pass
