"""Simulation and numerical verification lab for random interlacements.

Submodules: lattice geometry, discrete potential theory, walk
experiments, interlacement sampling, cluster and seed events,
renormalization machinery, phase maps, hypercube combinatorics, and the
command line front end.
"""

__version__ = "0.1.0"

from .errors import (ConsistencyError, GuardError, QuadratureError,
                     RejectionBudgetError, SolveError)
from .rng import RNGStream
from .stats import ExperimentEstimate, wilson_interval, wilson_upper

__all__ = [
    "__version__",
    "ConsistencyError", "GuardError", "QuadratureError",
    "RejectionBudgetError", "SolveError",
    "RNGStream", "ExperimentEstimate", "wilson_interval", "wilson_upper",
]
