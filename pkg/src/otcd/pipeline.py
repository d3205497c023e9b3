"""End-to-end approximation of the unregularized OT distance.

Given a target accuracy eps, the pipeline picks eta = eps / (4 ln n) and
eps' = eps / (8 ||C||_inf), smooths the marginals away from the simplex
boundary, solves the regularized dual to residual eps'/2, and rounds the
result onto the polytope of the *original* marginals.  The rounded plan's
cost then exceeds the true optimum by at most eps.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import CostMatrix, Histogram, TransportPlan
from .dual import RegularizedProblem
from .errors import DimensionMismatch, EpsPrimeOutOfRange, UnsortedSupport
from .rounding import round_to_polytope
from .solver import CoordinateRule, SolveReport, default_max_iters, sinkhorn_solve, solve


class Algorithm(enum.Enum):
    APDRCD = "apdrcd"
    APDGCD = "apdgcd"
    SINKHORN = "sinkhorn"


_RULE_FOR = {
    Algorithm.APDRCD: CoordinateRule.RANDOMIZED,
    Algorithm.APDGCD: CoordinateRule.GREEDY,
}


@dataclass(frozen=True)
class ApproxConfig:
    """Knobs for one approximation run."""

    epsilon: float
    algorithm: Algorithm = Algorithm.APDRCD
    seed: int = 0
    max_iters: int | None = None  # default: 4x the pessimistic iteration guarantee
    trace_every: int = 100

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class ApproxResult:
    """Rounded plan, its cost, and the parameters/report behind it."""

    plan: TransportPlan
    ot_value: float
    eta: float
    eps_prime: float
    report: SolveReport


def smooth_marginals(r: Histogram, l: Histogram, eps_prime: float) -> tuple[Histogram, Histogram]:
    """Mix the marginals with the uniform vector so every entry is positive.

    Each output entry is (1 - eps'/8) w_i + eps'/(8n), which keeps the vector
    on the simplex and floors it at eps'/(8n).
    """
    if not 0.0 < eps_prime <= 8.0:
        raise EpsPrimeOutOfRange(f"eps_prime must lie in (0, 8], got {eps_prime}")
    w = 1.0 - eps_prime / 8.0

    def mix(h: Histogram) -> Histogram:
        return Histogram(w * h.weights + eps_prime / (8.0 * h.n))

    return mix(r), mix(l)


def ot_objective(C: CostMatrix, plan: TransportPlan) -> float:
    """Transport cost <C, X>."""
    if C.entries.shape != plan.entries.shape:
        raise DimensionMismatch(
            f"cost shape {C.entries.shape} does not match plan shape {plan.entries.shape}"
        )
    return float((C.entries * plan.entries).sum())


def approximate_ot(
    C: CostMatrix, r: Histogram, l: Histogram, cfg: ApproxConfig, on_trace=None
) -> ApproxResult:
    """Compute an eps-accurate feasible plan for the OT instance (C, r, l)."""
    n = C.n
    if n < 2:
        raise DimensionMismatch("approximation pipeline needs n >= 2")
    if C.n != r.n or C.n != l.n:
        raise DimensionMismatch(f"cost is {n}x{n} but marginals have sizes {r.n}, {l.n}")
    if C.max_abs == 0.0:
        # Every plan costs zero; return a feasible one directly.
        plan = TransportPlan(np.outer(r.weights, l.weights))
        report = SolveReport(
            plan=plan, iterations=0, final_violation=0.0, trace=(), converged=True
        )
        return ApproxResult(plan=plan, ot_value=0.0, eta=math.inf, eps_prime=math.inf, report=report)

    eta = cfg.epsilon / (4.0 * math.log(n))
    eps_prime = cfg.epsilon / (8.0 * C.max_abs)
    r_s, l_s = smooth_marginals(r, l, eps_prime)
    prob = RegularizedProblem(cost=C, r=r_s, l=l_s, eta=eta)
    tol = eps_prime / 2.0
    max_iters = cfg.max_iters if cfg.max_iters is not None else default_max_iters(prob, tol)

    if cfg.algorithm is Algorithm.SINKHORN:
        report = sinkhorn_solve(prob, tol, max_iters, trace_every=cfg.trace_every, on_trace=on_trace)
    else:
        report = solve(
            prob,
            _RULE_FOR[cfg.algorithm],
            tol,
            max_iters=max_iters,
            trace_every=cfg.trace_every,
            seed=cfg.seed,
            on_trace=on_trace,
        )

    rounded = round_to_polytope(report.plan, r, l)
    return ApproxResult(
        plan=rounded,
        ot_value=ot_objective(C, rounded),
        eta=eta,
        eps_prime=eps_prime,
        report=report,
    )


def monotone_coupling_oracle(
    support, r: Histogram, l: Histogram, p: float = 1.0
) -> tuple[TransportPlan, float]:
    """Exact OT on a common sorted 1-D support with cost |s_i - s_j|^p.

    Builds the north-west-corner coupling by sweeping both cumulative masses;
    for convex costs (p >= 1) on a shared sorted support that coupling is
    optimal, so the returned value is the true OT distance.
    """
    s = np.asarray(support, dtype=np.float64)
    if s.ndim != 1 or s.size != r.n or s.size != l.n:
        raise DimensionMismatch(f"support size {s.size} does not match marginals ({r.n}, {l.n})")
    if np.any(np.diff(s) <= 0):
        raise UnsortedSupport("support must be strictly increasing")
    if not p >= 1:
        raise ValueError(f"cost exponent must be >= 1, got {p}")

    n = s.size
    plan = np.zeros((n, n))
    ri = r.weights.copy()
    lj = l.weights.copy()
    i = j = 0
    while i < n and j < n:
        m = min(ri[i], lj[j])
        plan[i, j] += m
        ri[i] -= m
        lj[j] -= m
        # Advance whichever side is exhausted; ties advance the row first.
        if ri[i] <= lj[j]:
            i += 1
        else:
            j += 1
    cost = np.abs(s[:, None] - s[None, :]) ** p
    tp = TransportPlan(plan)
    return tp, float((cost * plan).sum())
