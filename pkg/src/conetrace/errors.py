"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for invalid input, 3 for numerical failure, 4 for a refusal mandated by
the theory (no solution exists in that regime).
"""


class ConetraceError(Exception):
    exit_code = 3


class InvalidInput(ConetraceError, ValueError):
    exit_code = 2


class InvalidPolygon(InvalidInput):
    pass


# numerical failures


class NumericalFailure(ConetraceError):
    exit_code = 3


class SingularOperator(NumericalFailure):
    pass


class NoConvergence(NumericalFailure):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class LineSearchStall(NoConvergence):
    pass


class AmbiguousNearCritical(NumericalFailure):
    pass


class ScheduleExhausted(NumericalFailure):
    pass


class WindowTooNoisy(NumericalFailure):
    pass


class Unclassifiable(NumericalFailure):
    pass


class SandwichViolation(NumericalFailure):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


# regime refusals


class RegimeRefusal(ConetraceError):
    exit_code = 4


class SupercriticalNoSolution(RegimeRefusal):
    pass


class SupercriticalRefused(RegimeRefusal):
    pass


class InadmissibleDatum(RegimeRefusal):
    pass
