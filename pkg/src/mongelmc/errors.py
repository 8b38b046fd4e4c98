"""Exception types.

Anything deriving from :class:`DivergenceError` marks a numerically broken
trajectory. The integrator catches these and rejects the proposal instead of
letting the exception escape the chain.
"""


class DivergenceError(ArithmeticError):
    """Base class for failures that end a trajectory as divergent."""


class NonFiniteEvaluation(DivergenceError):
    """Log-density, gradient or Hessian evaluated to NaN or infinity."""


class NonFiniteEnergy(DivergenceError):
    """Energy of a phase state is not finite."""


class DegenerateDenominator(DivergenceError):
    """Denominator of a rank-one inverse fell below the configured floor."""


class DegenerateDeterminant(DivergenceError):
    """Shifted determinant in the Jacobian correction fell below the floor."""


class OriginSingularity(DivergenceError):
    """Ring density evaluated at (or numerically at) the origin."""


class NonPositiveDefinite(ValueError):
    """Covariance matrix is not symmetric positive-definite."""


class InitialPointInvalid(ValueError):
    """Chain started at a point where the log-density is not finite."""


class ZeroVariance(ValueError):
    """Series is constant, so autocorrelation is undefined."""


class EmptyRange(ValueError):
    """No sample fell inside the histogram range."""
