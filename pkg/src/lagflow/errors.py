"""Exception types raised by the numerical core."""


class LagflowError(Exception):
    """Base class for all library errors."""


class NonFiniteError(LagflowError, ValueError):
    """NaN or Inf encountered in an input or an intermediate evaluation."""


class VarianceError(LagflowError, ValueError):
    """Contraction attempted between indices of the wrong variance or size."""


class SingularMatrixError(LagflowError, ValueError):
    """Matrix is singular or too ill-conditioned to invert reliably."""


class FdEvaluationError(LagflowError):
    """A field could not be evaluated somewhere inside a finite-difference stencil."""


class ImmersionError(LagflowError):
    """The discrete map is not an immersion (rank-deficient differential)."""


class DegenerateError(LagflowError):
    """The submanifold stopped being almost Lagrangian (eta not invertible)."""


class ChartExitError(LagflowError):
    """A point left the valid coordinate box of the chart."""


class SpecError(LagflowError, ValueError):
    """An invalid geometry, initial-data, or run specification."""


class GeometryCheckError(SpecError):
    """A built geometry failed its structure, connection-class or Einstein check."""
