import math

import numpy as np
import pytest

from otcd.core import CostMatrix, make_histogram, marginal_violation
from otcd.dual import DualPoint, RegularizedProblem, dual_value
from otcd.errors import MaxItersExceeded
from otcd.solver import (
    CoordinateRule,
    ThetaSchedule,
    advance_theta,
    apdcd_step,
    initial_state,
    iteration_bound,
    sinkhorn_solve,
    solve,
)


def random_problem(n, eta, seed):
    rng = np.random.default_rng(seed)
    C = CostMatrix(rng.uniform(0, 1, size=(n, n)))
    r = make_histogram(rng.uniform(0.1, 1.0, size=n))
    l = make_histogram(rng.uniform(0.1, 1.0, size=n))
    return RegularizedProblem(cost=C, r=r, l=l, eta=eta)


def feasible_start_problem(n=2, eta=1.0):
    """Constant cost chosen so X(0) is exactly uniform with total mass 1."""
    c = eta * (math.log(n * n) - 1.0)
    return RegularizedProblem(
        cost=CostMatrix(np.full((n, n), c)),
        r=make_histogram(np.ones(n)),
        l=make_histogram(np.ones(n)),
        eta=eta,
    )


def theta_root_oracle(theta_prev):
    """Solve (1 - t)/t^2 = 1/theta_prev^2 for t in (0, 1) by bisection."""
    target = 1.0 / theta_prev**2

    def f(t):
        return (1.0 - t) / (t * t) - target

    lo, hi = 1e-12, 1.0
    for _ in range(200):
        mid = (lo + hi) / 2
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def test_theta_first_steps():
    s0 = ThetaSchedule()
    assert s0.theta == 1.0 and s0.weight_sum == 1.0
    s1 = advance_theta(s0)
    assert s1.theta == pytest.approx((math.sqrt(5) - 1) / 2, rel=1e-15)
    s2 = advance_theta(s1)
    # Frozen from the independent bisection oracle for (1-t)/t^2 = 1/theta_1^2.
    assert theta_root_oracle(s1.theta) == pytest.approx(0.4558867801028665, rel=1e-10)
    assert s2.theta == pytest.approx(0.4558867801028665, rel=1e-12)


def test_theta_recurrence_and_bounds():
    s = ThetaSchedule()
    running = 1.0
    for k in range(1, 10_000):
        prev = s.theta
        s = advance_theta(s)
        running += 1.0 / s.theta
        # Recurrence residual (1 - t_{k})/t_k^2 - 1/t_{k-1}^2.
        assert abs((1 - s.theta) / s.theta**2 - 1.0 / prev**2) <= 1e-12 / s.theta**2
        assert s.theta <= 2.0 / (k + 2)
        assert s.weight_sum == pytest.approx(running, rel=1e-12)
        assert s.weight_sum == pytest.approx(1.0 / s.theta**2, rel=1e-9)
        assert s.weight_sum >= (k + 1) * (k + 4) / 4.0


def test_theta_upper_bound_long_run():
    theta = 1.0
    for k in range(1, 1_000_000):
        theta = (theta * theta / 2.0) * (math.sqrt(1.0 + 4.0 / (theta * theta)) - 1.0)
        assert theta <= 2.0 / (k + 2)


def test_step_hand_example():
    # n=1, C=0, eta=1: both stacked gradients equal exp(-1) - 1, so the greedy
    # tie-break picks coordinate 0 deterministically.
    prob = RegularizedProblem(
        cost=CostMatrix(np.zeros((1, 1))), r=make_histogram([1.0]), l=make_histogram([1.0]), eta=1.0
    )
    state = initial_state(prob, seed=0)
    nxt = apdcd_step(prob, state, CoordinateRule.GREEDY)
    g = math.exp(-1) - 1.0
    assert nxt.last_index == 0
    assert nxt.last_gradient == pytest.approx(g, rel=1e-15)
    assert nxt.lam.alpha[0] == pytest.approx((1 - math.exp(-1)) / 4, rel=1e-12)
    assert nxt.lam.beta[0] == 0.0  # off-coordinate inherits y^0
    assert nxt.z.alpha[0] == pytest.approx((1 - math.exp(-1)) / 8, rel=1e-12)
    assert nxt.z.beta[0] == 0.0


def test_step_zero_gradient_leaves_duals():
    prob = feasible_start_problem()
    state = initial_state(prob, seed=1)
    nxt = apdcd_step(prob, state, CoordinateRule.GREEDY)
    assert nxt.last_gradient == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_array_equal(nxt.lam.stacked(), np.zeros(4))
    np.testing.assert_array_equal(nxt.z.stacked(), np.zeros(4))


@pytest.mark.parametrize("rule", [CoordinateRule.RANDOMIZED, CoordinateRule.GREEDY])
def test_per_iteration_descent(rule):
    prob = random_problem(6, eta=0.8, seed=7)
    state = initial_state(prob, seed=7)
    L = prob.lipschitz
    for _ in range(60):
        y = state.y
        nxt = apdcd_step(prob, state, rule)
        drop = dual_value(prob, nxt.lam) - dual_value(prob, y)
        assert drop <= -(1.0 / (2 * L)) * nxt.last_gradient**2 + 1e-10
        state = nxt


@pytest.mark.parametrize("rule", [CoordinateRule.RANDOMIZED, CoordinateRule.GREEDY])
def test_mixing_and_averaging_identities(rule):
    prob = random_problem(4, eta=0.5, seed=9)
    state = initial_state(prob, seed=9)
    inv_thetas = [1.0]
    for _ in range(40):
        state = apdcd_step(prob, state, rule)
        sched = state.schedule
        inv_thetas.append(1.0 / sched.theta)
        mix = (1 - sched.theta) * state.lam.stacked() + sched.theta * state.z.stacked()
        np.testing.assert_allclose(state.y.stacked(), mix, rtol=0, atol=1e-12)
        assert sched.weight_sum == pytest.approx(sum(inv_thetas), rel=1e-9)
        assert np.all(state.averaged_plan() >= 0)


def test_solve_feasible_start_converges_immediately():
    prob = feasible_start_problem()
    report = solve(prob, CoordinateRule.RANDOMIZED, eps_prime=1e-6, max_iters=10, seed=0)
    assert report.converged
    assert report.iterations == 0
    assert report.final_violation <= 1e-12


def test_solve_symmetric_instance_near_oracle():
    # Symmetric two-point instance whose unregularized optimum is 0.
    prob = RegularizedProblem(
        cost=CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])),
        r=make_histogram([1, 1]),
        l=make_histogram([1, 1]),
        eta=0.5,
    )
    report = solve(prob, CoordinateRule.RANDOMIZED, eps_prime=0.01, max_iters=200_000, seed=3)
    assert report.converged
    assert report.final_violation <= 0.01
    cost = float((prob.cost.entries * report.plan.entries).sum())
    assert cost <= 2 * 0.5 * math.log(2) + 0.01 * 1.0 + 1e-9


def test_greedy_no_slower_than_randomized_median():
    prob = RegularizedProblem(
        cost=CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]])),
        r=make_histogram([1, 1]),
        l=make_histogram([1, 1]),
        eta=0.5,
    )
    greedy = solve(prob, CoordinateRule.GREEDY, eps_prime=0.01, max_iters=200_000).iterations
    randomized = [
        solve(prob, CoordinateRule.RANDOMIZED, eps_prime=0.01, max_iters=200_000, seed=s).iterations
        for s in range(20)
    ]
    assert greedy <= np.median(randomized)


def test_solve_deterministic():
    prob = random_problem(5, eta=0.6, seed=13)
    a = solve(prob, CoordinateRule.RANDOMIZED, eps_prime=0.05, max_iters=100_000, seed=99)
    b = solve(prob, CoordinateRule.RANDOMIZED, eps_prime=0.05, max_iters=100_000, seed=99)
    assert a.iterations == b.iterations
    assert a.final_violation == b.final_violation
    np.testing.assert_array_equal(a.plan.entries, b.plan.entries)
    assert a.trace == b.trace


def test_solve_matches_manual_stepping_bitwise():
    prob = random_problem(5, eta=0.3, seed=17)
    report = solve(prob, CoordinateRule.RANDOMIZED, eps_prime=0.05, max_iters=100_000, seed=42)
    state = initial_state(prob, seed=42)
    while marginal_violation_of(state, prob) > 0.05:
        state = apdcd_step(prob, state, CoordinateRule.RANDOMIZED)
    assert state.schedule.k == report.iterations
    np.testing.assert_array_equal(report.plan.entries, state.averaged_plan())


def marginal_violation_of(state, prob):
    avg = state.averaged_plan()
    return float(
        np.abs(avg.sum(axis=1) - prob.r.weights).sum() + np.abs(avg.sum(axis=0) - prob.l.weights).sum()
    )


def test_solve_budget_exhaustion_carries_partial_report():
    prob = random_problem(6, eta=0.05, seed=19)
    with pytest.raises(MaxItersExceeded) as info:
        solve(prob, CoordinateRule.RANDOMIZED, eps_prime=1e-9, max_iters=1, seed=0)
    report = info.value.report
    assert not report.converged
    assert report.iterations == 1
    assert len(report.trace) >= 1
    assert report.final_violation > 1e-9


def test_trace_count_matches_budget_over_stride():
    prob = random_problem(4, eta=0.4, seed=23)
    with pytest.raises(MaxItersExceeded) as info:
        solve(prob, CoordinateRule.RANDOMIZED, eps_prime=1e-12, max_iters=100, trace_every=10, seed=0)
    trace = info.value.report.trace
    assert [tp.iteration for tp in trace] == [10 * i for i in range(1, 11)]


def test_iteration_bound_finite_only_for_positive_marginals():
    prob = random_problem(4, eta=0.5, seed=29)
    assert math.isfinite(iteration_bound(prob, 0.01))
    zero = RegularizedProblem(
        cost=prob.cost, r=make_histogram([1, 0, 0, 0]), l=prob.l, eta=0.5
    )
    assert iteration_bound(zero, 0.01) == math.inf


def test_sinkhorn_converges_and_is_feasible_to_tolerance():
    prob = random_problem(5, eta=0.2, seed=31)
    report = sinkhorn_solve(prob, eps_prime=1e-6, max_iters=10_000, trace_every=100)
    assert report.converged
    assert marginal_violation(report.plan, prob.r, prob.l) <= 1e-6


def test_sinkhorn_budget_exhaustion():
    prob = random_problem(5, eta=0.2, seed=37)
    with pytest.raises(MaxItersExceeded) as info:
        sinkhorn_solve(prob, eps_prime=1e-13, max_iters=3)
    assert info.value.report.iterations == 3
