"""Accelerated primal-dual coordinate descent on the entropic dual.

One shared loop implements both coordinate-selection rules: at iteration k
the mixed point y^k = (1 - theta_k) lambda^k + theta_k z^k is formed, one
coordinate i_k of the stacked duals is chosen (uniformly at random, or
greedily as the largest-magnitude gradient entry), and

    lambda^{k+1} = y^k - (g / L) e_{i_k}
    z^{k+1}      = z^k - (g / (2 n L theta_k)) e_{i_k}

with g the partial gradient at y^k and L = 4/eta.  The primal output is the
weighted running average x^k = (1/C_k) sum_{j<=k} X(y^j)/theta_j, where
C_k = sum_{j<=k} 1/theta_j, and the loop stops once the averaged plan's
marginal residual ||A vec(x^k) - b||_1 drops to the requested tolerance.

A plain Sinkhorn baseline with the same stopping rule lives here as well.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .core import TransportPlan
from .dual import (
    DualPoint,
    RegularizedProblem,
    coordinate_gradient_from_arrays,
    gradient_from_plan,
    plan_from_arrays,
    primal_plan_array,
)
from .errors import MaxItersExceeded
from .seeding import CoordinateSampler


class CoordinateRule(enum.Enum):
    """How the descent coordinate i_k is chosen each iteration."""

    RANDOMIZED = "randomized"  # uniform over the 2n stacked coordinates
    GREEDY = "greedy"  # argmax |gradient|, lowest index on ties


@dataclass(frozen=True)
class ThetaSchedule:
    """Acceleration weights theta_0 = 1, (1 - theta_{k+1})/theta_{k+1}^2 = 1/theta_k^2.

    weight_sum accumulates C_k = sum_{j<=k} 1/theta_j, which also equals
    1/theta_k^2 by the recurrence.
    """

    theta: float = 1.0
    k: int = 0
    weight_sum: float = 1.0


def advance_theta(s: ThetaSchedule) -> ThetaSchedule:
    """Advance the schedule one step via the closed-form positive root."""
    t = s.theta
    t_next = (t * t / 2.0) * (math.sqrt(1.0 + 4.0 / (t * t)) - 1.0)
    return ThetaSchedule(theta=t_next, k=s.k + 1, weight_sum=s.weight_sum + 1.0 / t_next)


@dataclass(frozen=True)
class SolverState:
    """Solver state at rest before iteration k = schedule.k.

    y is already mixed for this iteration and plan_y = X(y) has been folded
    into primal_sum, so primal_sum / schedule.weight_sum is exactly the
    averaged primal x^k.
    """

    lam: DualPoint
    z: DualPoint
    y: DualPoint
    schedule: ThetaSchedule
    primal_sum: np.ndarray
    plan_y: np.ndarray
    rng_seed: int
    last_index: int = -1  # coordinate updated by the step that produced this state
    last_gradient: float = 0.0

    @property
    def iterations(self) -> int:
        return self.schedule.k

    def averaged_plan(self) -> np.ndarray:
        return self.primal_sum / self.schedule.weight_sum


@dataclass(frozen=True)
class TracePoint:
    iteration: int
    violation: float
    dual_value: float
    ot_value: float


@dataclass(frozen=True)
class SolveReport:
    """Outcome of a solve: averaged plan, residual, and sampled trace."""

    plan: TransportPlan
    iterations: int
    final_violation: float
    trace: tuple
    converged: bool


def initial_state(prob: RegularizedProblem, seed: int) -> SolverState:
    lam = DualPoint.zeros(prob.n)
    plan0 = primal_plan_array(prob, lam)
    return SolverState(
        lam=lam,
        z=lam,
        y=lam,
        schedule=ThetaSchedule(),
        primal_sum=plan0.copy(),  # theta_0 = 1
        plan_y=plan0,
        rng_seed=int(seed),
    )


def _select_coordinate(prob, y_vec, plan_y, rule, sampler, k, seed):
    n = prob.n
    if rule is CoordinateRule.GREEDY:
        grad = gradient_from_plan(plan_y, prob)
        i = int(np.argmax(np.abs(grad)))
        return i, float(grad[i])
    if sampler is None:
        sampler = CoordinateSampler(seed, 2 * n)
    i = sampler.draw(k)
    return i, coordinate_gradient_from_arrays(prob, y_vec[:n], y_vec[n:], i)


def _advance_arrays(prob, y_vec, z_vec, schedule, i, g):
    """Shared update kernel: coordinate step, schedule advance, re-mix."""
    n = prob.n
    L = prob.lipschitz
    lam_next = y_vec.copy()
    lam_next[i] -= g / L
    z_next = z_vec.copy()
    z_next[i] -= g / (2.0 * n * L * schedule.theta)
    sched_next = advance_theta(schedule)
    y_next = (1.0 - sched_next.theta) * lam_next + sched_next.theta * z_next
    plan_y = plan_from_arrays(prob, y_next[:n], y_next[n:])
    return lam_next, z_next, y_next, sched_next, plan_y


def apdcd_step(
    prob: RegularizedProblem,
    state: SolverState,
    rule: CoordinateRule,
    sampler: CoordinateSampler | None = None,
) -> SolverState:
    """Perform one coordinate update and advance to iteration k+1."""
    y_vec = state.y.stacked()
    i, g = _select_coordinate(prob, y_vec, state.plan_y, rule, sampler, state.schedule.k, state.rng_seed)
    lam_next, z_next, y_next, sched_next, plan_y = _advance_arrays(
        prob, y_vec, state.z.stacked(), state.schedule, i, g
    )
    return SolverState(
        lam=DualPoint.from_stacked(lam_next),
        z=DualPoint.from_stacked(z_next),
        y=DualPoint.from_stacked(y_next),
        schedule=sched_next,
        primal_sum=state.primal_sum + plan_y / sched_next.theta,
        plan_y=plan_y,
        rng_seed=state.rng_seed,
        last_index=i,
        last_gradient=g,
    )


def _violation(primal_sum: np.ndarray, weight_sum: float, prob: RegularizedProblem) -> float:
    row = primal_sum.sum(axis=1) / weight_sum - prob.r.weights
    col = primal_sum.sum(axis=0) / weight_sum - prob.l.weights
    return float(np.abs(row).sum() + np.abs(col).sum())


def iteration_bound(prob: RegularizedProblem, tol: float) -> float:
    """Pessimistic guarantee on iterations until the residual reaches tol.

    Returns 12 n^{3/2} sqrt((R + 1/2)/tol) + 1 with
    R = ||C||_inf / eta + log n - 2 log(min marginal entry); infinite when a
    marginal entry is zero.
    """
    m = min(prob.r.min_entry(), prob.l.min_entry())
    if m <= 0.0:
        return math.inf
    R = prob.cost.max_abs / prob.eta + math.log(prob.n) - 2.0 * math.log(m)
    return 12.0 * prob.n ** 1.5 * math.sqrt((R + 0.5) / tol) + 1.0


def default_max_iters(prob: RegularizedProblem, tol: float) -> int:
    """Default budget: 4x the pessimistic iteration guarantee."""
    bound = iteration_bound(prob, tol)
    if not math.isfinite(bound):
        raise ValueError(
            "iteration guarantee is infinite (a marginal entry is zero); pass max_iters explicitly"
        )
    return math.ceil(4.0 * bound)


def solve(
    prob: RegularizedProblem,
    rule: CoordinateRule,
    eps_prime: float,
    max_iters: int | None = None,
    trace_every: int = 1,
    seed: int = 0,
    on_trace=None,
) -> SolveReport:
    """Run coordinate descent until ||A vec(x^k) - b||_1 <= eps_prime.

    The residual is checked every iteration against the marginals stored in
    ``prob``; the trace is sampled at iterations trace_every, 2*trace_every,
    ... plus the final iterate, and ``on_trace`` (if given) is called with
    each sample as it is recorded.  Raises MaxItersExceeded (carrying the
    partial report) when the budget runs out first.  Identical inputs and
    seed reproduce the run bit for bit.
    """
    if not eps_prime > 0:
        raise ValueError(f"eps_prime must be positive, got {eps_prime}")
    if max_iters is None:
        max_iters = default_max_iters(prob, eps_prime)
    if max_iters < 1:
        raise ValueError("max_iters must be at least 1")
    trace_every = max(1, int(trace_every))

    n = prob.n
    sampler = CoordinateSampler(seed, 2 * n)
    schedule = ThetaSchedule()
    y_vec = np.zeros(2 * n)
    z_vec = np.zeros(2 * n)
    plan_y = plan_from_arrays(prob, y_vec[:n], y_vec[n:])
    primal_sum = plan_y.copy()
    trace: list[TracePoint] = []

    def record(violation: float) -> None:
        phi = (
            prob.eta * float(plan_y.sum())
            - float(y_vec[:n] @ prob.r.weights)
            - float(y_vec[n:] @ prob.l.weights)
        )
        ot = float((prob.cost.entries * primal_sum).sum()) / schedule.weight_sum
        tp = TracePoint(
            iteration=schedule.k, violation=violation, dual_value=phi, ot_value=ot
        )
        trace.append(tp)
        if on_trace is not None:
            on_trace(tp)

    while True:
        k = schedule.k
        violation = _violation(primal_sum, schedule.weight_sum, prob)
        if k > 0 and k % trace_every == 0:
            record(violation)
        done = violation <= eps_prime
        exhausted = not done and k >= max_iters
        if done or exhausted:
            if not trace or trace[-1].iteration != k:
                record(violation)
            report = SolveReport(
                plan=TransportPlan(primal_sum / schedule.weight_sum),
                iterations=k,
                final_violation=violation,
                trace=tuple(trace),
                converged=done,
            )
            if done:
                return report
            raise MaxItersExceeded(
                f"residual {violation:.3g} > {eps_prime:.3g} after {k} iterations", report
            )
        i, g = _select_coordinate(prob, y_vec, plan_y, rule, sampler, k, seed)
        _, z_vec, y_vec, schedule, plan_y = _advance_arrays(prob, y_vec, z_vec, schedule, i, g)
        primal_sum += plan_y / schedule.theta


def sinkhorn_solve(
    prob: RegularizedProblem,
    eps_prime: float,
    max_iters: int,
    trace_every: int = 1,
    on_trace=None,
) -> SolveReport:
    """Alternating marginal scaling on the kernel exp(-C/eta).

    Stops on the same residual rule as the coordinate solvers so the two
    families are comparable in the benchmark harness.  The reported plan is
    the current scaled kernel (no averaging).
    """
    if not eps_prime > 0:
        raise ValueError(f"eps_prime must be positive, got {eps_prime}")
    trace_every = max(1, int(trace_every))
    K = np.exp(-prob.cost.entries / prob.eta)
    r, l = prob.r.weights, prob.l.weights
    u = np.ones(prob.n)
    v = np.ones(prob.n)
    trace: list[TracePoint] = []

    def record(k: int, plan: np.ndarray, violation: float) -> None:
        with np.errstate(divide="ignore"):
            alpha = prob.eta * (np.log(u) + 0.5)
            beta = prob.eta * (np.log(v) + 0.5)
        phi = prob.eta * float(plan.sum()) - float(alpha @ r) - float(beta @ l)
        tp = TracePoint(
            iteration=k,
            violation=violation,
            dual_value=phi,
            ot_value=float((prob.cost.entries * plan).sum()),
        )
        trace.append(tp)
        if on_trace is not None:
            on_trace(tp)

    k = 0
    while True:
        plan = (u[:, None] * K) * v[None, :]
        violation = float(np.abs(plan.sum(axis=1) - r).sum() + np.abs(plan.sum(axis=0) - l).sum())
        if k > 0 and k % trace_every == 0:
            record(k, plan, violation)
        done = violation <= eps_prime
        exhausted = not done and k >= max_iters
        if done or exhausted:
            if not trace or trace[-1].iteration != k:
                record(k, plan, violation)
            report = SolveReport(
                plan=TransportPlan(plan),
                iterations=k,
                final_violation=violation,
                trace=tuple(trace),
                converged=done,
            )
            if done:
                return report
            raise MaxItersExceeded(
                f"residual {violation:.3g} > {eps_prime:.3g} after {k} iterations", report
            )
        with np.errstate(divide="ignore", invalid="ignore"):
            u = r / (K @ v)
            v = l / (K.T @ u)
        k += 1
