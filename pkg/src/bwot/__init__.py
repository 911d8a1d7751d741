"""Bregman-Wasserstein optimal transport on discrete measures.

The hot loops (assignment, log-domain Sinkhorn, inverse Langevin) run as
numba kernels when numba is importable; set ``BWOT_DISABLE_NUMBA=1`` to use
the pure numpy versions instead.
"""
__version__ = "0.1.0"

from ._backend import BACKEND, HAVE_NUMBA
from .errors import BWError, ConvergenceError, DomainError, InputError, StencilError, StepError
from .generators import CATALOG, Generator, bregman, canonical_divergence, make_generator
from .transport import (
    DiscreteMeasure,
    SolverConfig,
    TransportPlan,
    bw_divergence,
    bw_via_mirror,
    cost_matrix,
    solve,
    solve_exact,
    solve_sinkhorn,
)

__all__ = [
    "__version__",
    "BACKEND",
    "HAVE_NUMBA",
    "BWError",
    "ConvergenceError",
    "DomainError",
    "InputError",
    "StencilError",
    "StepError",
    "CATALOG",
    "Generator",
    "bregman",
    "canonical_divergence",
    "make_generator",
    "DiscreteMeasure",
    "SolverConfig",
    "TransportPlan",
    "bw_divergence",
    "bw_via_mirror",
    "cost_matrix",
    "solve",
    "solve_exact",
    "solve_sinkhorn",
]
