"""Exception hierarchy.

Every domain failure derives from :class:`AdvRobustError`; the CLI maps
those to exit status 1. :class:`ParseError` is an input problem (exit 2).
"""


class AdvRobustError(Exception):
    """Base class for domain errors."""


class InvalidParameterError(AdvRobustError, ValueError):
    pass


class QuadratureError(AdvRobustError):
    def __init__(self, message, abserr=None):
        super().__init__(message)
        self.abserr = abserr


class UnsupportedSamplingError(AdvRobustError):
    pass


class NoRootError(AdvRobustError):
    pass


class AmbiguousRootError(AdvRobustError):
    def __init__(self, message, roots):
        super().__init__(message)
        self.roots = list(roots)


class DegenerateEstimatorError(AdvRobustError):
    pass


class BreakpointAmbiguityError(AdvRobustError):
    def __init__(self, message, index):
        super().__init__(message)
        self.index = index


class NullGradientError(AdvRobustError):
    pass


class OracleSizeError(AdvRobustError):
    pass


class InfeasibleBudgetError(AdvRobustError):
    def __init__(self, message, min_feasible_xi=None):
        super().__init__(message)
        self.min_feasible_xi = min_feasible_xi


class OutOfRegimeError(AdvRobustError):
    pass


class DegenerateWeightsError(AdvRobustError):
    pass


class ShapeError(AdvRobustError, ValueError):
    pass


class ParseError(Exception):
    """Malformed input file; carries the offending line number when known."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
