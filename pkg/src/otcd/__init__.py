"""Entropic optimal transport via accelerated primal-dual coordinate descent.

The package computes approximate OT plans with randomized (apdrcd) or greedy
(apdgcd) coordinate descent on the smoothed dual, rounds them exactly onto
the transportation polytope, extends the solvers to decentralized
Wasserstein-barycenter computation over agent graphs, and ships a benchmark
harness with deterministic seeding.
"""

from .barycenter import (
    BarycenterProblem,
    BarycenterResult,
    NetworkGraph,
    barycenter_solve,
    conjugate_gradient,
    consensus_residual,
    laplacian,
)
from .core import (
    CostMatrix,
    Histogram,
    Marginals,
    TransportPlan,
    make_histogram,
    marginal_violation,
    marginals,
)
from .dual import (
    DualPoint,
    RegularizedProblem,
    coordinate_gradient,
    dual_value,
    full_gradient,
    primal_map,
)
from .pipeline import (
    Algorithm,
    ApproxConfig,
    ApproxResult,
    approximate_ot,
    monotone_coupling_oracle,
    ot_objective,
    smooth_marginals,
)
from .rounding import round_to_polytope
from .solver import (
    CoordinateRule,
    SolveReport,
    ThetaSchedule,
    advance_theta,
    apdcd_step,
    sinkhorn_solve,
    solve,
)

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "ApproxConfig",
    "ApproxResult",
    "BarycenterProblem",
    "BarycenterResult",
    "CoordinateRule",
    "CostMatrix",
    "DualPoint",
    "Histogram",
    "Marginals",
    "NetworkGraph",
    "RegularizedProblem",
    "SolveReport",
    "ThetaSchedule",
    "TransportPlan",
    "advance_theta",
    "apdcd_step",
    "approximate_ot",
    "barycenter_solve",
    "conjugate_gradient",
    "consensus_residual",
    "coordinate_gradient",
    "dual_value",
    "full_gradient",
    "laplacian",
    "make_histogram",
    "marginal_violation",
    "marginals",
    "monotone_coupling_oracle",
    "ot_objective",
    "primal_map",
    "round_to_polytope",
    "sinkhorn_solve",
    "smooth_marginals",
    "solve",
]
