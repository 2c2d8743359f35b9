"""Exception types raised across the package."""


class PlmaError(Exception):
    """Base class for all errors raised by plma."""


class GridError(PlmaError, ValueError):
    """Bad grid geometry, mismatched grids or out-of-bounds evaluation."""


class NonFiniteError(PlmaError, ValueError):
    """A sampled evaluator returned NaN or inf."""


class NonConvexError(PlmaError, ValueError):
    """Input violates a convexity precondition beyond tolerance."""


class ConvergenceError(PlmaError, RuntimeError):
    """An iterative solver failed to reach its tolerance."""


class StallError(ConvergenceError):
    """Outer iteration stopped making progress."""


class CoefficientBoundsError(PlmaError, ValueError):
    """Elliptic coefficient left the [1/C0, C0] band."""


class MaskCollapseError(PlmaError, RuntimeError):
    """The image region of the coordinate map is too thin to solve on."""


class CaseValidationError(PlmaError, ValueError):
    """An analytic test case failed its load-time consistency probes."""
