"""Exception hierarchy. Every domain error is a ``ValueError`` so callers that
only care about bad input can catch one type."""


class BriskError(ValueError):
    """Base class for all library errors."""


class DimensionMismatch(BriskError):
    pass


class SingularMatrix(BriskError):
    pass


class InvalidBarrier(BriskError):
    """Barrier lies in the excluded region (-inf, 0]^d."""


class DimensionTooLarge(BriskError):
    pass


class NoFeasibleSet(BriskError):
    """No index set passed the optimality test (ill-conditioned input)."""


class RhoOutOfRange(BriskError):
    pass


class DomainError(BriskError):
    pass


class NonPositiveLambda(BriskError):
    pass


class BudgetTooSmall(BriskError):
    pass


class DegenerateBound(BriskError):
    pass


class PartialIndexSet(BriskError):
    pass


class InvalidScenario(BriskError):
    pass


class InvalidTrend(BriskError):
    pass


class HorizonTooLarge(BriskError):
    pass


class ScheduleInvalid(BriskError):
    pass


class SpanTooNarrow(BriskError):
    pass
