"""Exception hierarchy shared by the pricing modules."""


class RobustHedgeError(Exception):
    """Base class for every error raised by this package."""


class InputError(RobustHedgeError, ValueError):
    """Malformed or inconsistent input data (bad files, shapes, ranges)."""


class ArbitrageError(InputError):
    """Call quotes that admit static arbitrage."""


class NonConvexCurve(ArbitrageError):
    pass


class NegativeMass(ArbitrageError):
    pass


class ExtrapolationError(InputError):
    """A price was needed outside the quoted strike range and cannot be deduced."""


class UnknownKind(InputError):
    pass


class GrowthBoundViolation(InputError):
    pass


class NegativePayoff(InputError):
    pass


class OffGridPath(InputError):
    pass


class InfeasibleModel(RobustHedgeError):
    """The martingale polytope is empty (means differ or convex order fails)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class SolverFailure(RobustHedgeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NotOptimal(RobustHedgeError):
    pass


class PlateauAtLevel(RobustHedgeError):
    """The utility is flat around the requested level, so its inverse is ill-posed."""


class OutOfRange(RobustHedgeError, ValueError):
    pass


class DomainError(RobustHedgeError, ValueError):
    pass


class TooLarge(RobustHedgeError):
    pass
