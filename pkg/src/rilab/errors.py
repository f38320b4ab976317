"""Exception taxonomy shared across modules.

The CLI maps these onto exit codes: usage problems are handled by the
argument parser, GuardError means a documented precondition was violated,
everything else here counts as a numerical or sampler failure.
"""


class GuardError(ValueError):
    """A documented precondition was violated at an API boundary."""


class QuadratureError(ArithmeticError):
    """Green function quadrature did not reach the requested tolerance."""


class SolveError(ArithmeticError):
    """Boundary linear system is unsolvable or too ill-conditioned to trust."""


class ConsistencyError(AssertionError):
    """An internal cross-check failed (probability out of bounds, uniqueness)."""


class RejectionBudgetError(RuntimeError):
    """Conditioned-walk rejection loop exhausted its retry budget."""
