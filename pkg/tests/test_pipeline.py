import math

import numpy as np
import pytest

from otcd.core import CostMatrix, TransportPlan, make_histogram, marginal_violation
from otcd.errors import EpsPrimeOutOfRange, UnsortedSupport
from otcd.pipeline import (
    Algorithm,
    ApproxConfig,
    approximate_ot,
    monotone_coupling_oracle,
    ot_objective,
    smooth_marginals,
)


def cdf_transport_cost(support, r, l):
    """Independent 1-D oracle: integral of |F_r - F_l| over the support cells."""
    fr = np.cumsum(r.weights)
    fl = np.cumsum(l.weights)
    gaps = np.diff(np.asarray(support, dtype=float))
    return float(np.abs(fr[:-1] - fl[:-1]) @ gaps)


def test_smooth_marginals_formula():
    r = make_histogram([1.0, 0.0])
    l = make_histogram([0.5, 0.5])
    rs, ls = smooth_marginals(r, l, eps_prime=0.8)
    np.testing.assert_allclose(rs.weights, [0.95, 0.05], rtol=1e-15)
    np.testing.assert_allclose(ls.weights, [0.5, 0.5], rtol=1e-15)


def test_smooth_marginals_uniform_fixed_point():
    u = make_histogram(np.ones(5))
    rs, _ = smooth_marginals(u, u, eps_prime=1.3)
    np.testing.assert_allclose(rs.weights, np.full(5, 0.2), rtol=1e-15)


def test_smooth_marginals_stays_on_simplex():
    rng = np.random.default_rng(0)
    for eps_prime in (0.01, 1.0, 7.9):
        r = make_histogram(rng.uniform(0, 1, size=6))
        rs, _ = smooth_marginals(r, r, eps_prime)
        assert abs(rs.weights.sum() - 1.0) <= 1e-15
        assert rs.weights.min() >= eps_prime / (8 * 6) - 1e-18


def test_smooth_marginals_range_check():
    u = make_histogram([1, 1])
    for bad in (0.0, -1.0, 8.5):
        with pytest.raises(EpsPrimeOutOfRange):
            smooth_marginals(u, u, bad)


def test_ot_objective():
    C0 = CostMatrix(np.zeros((2, 2)))
    any_plan = TransportPlan(np.full((2, 2), 0.25))
    assert ot_objective(C0, any_plan) == 0.0

    swap = CostMatrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert ot_objective(swap, TransportPlan(np.diag([0.5, 0.5]))) == 0.0

    rng = np.random.default_rng(1)
    C = CostMatrix(rng.uniform(0, 1, size=(3, 3)))
    X = TransportPlan(rng.uniform(0, 0.2, size=(3, 3)))
    brute = sum(C.entries[i, j] * X.entries[i, j] for i in range(3) for j in range(3))
    assert ot_objective(C, X) == pytest.approx(brute, rel=1e-14)


def test_monotone_coupling_equal_marginals():
    r = make_histogram([0.2, 0.5, 0.3])
    plan, value = monotone_coupling_oracle([0.0, 1.0, 2.0], r, r, p=1.0)
    assert value == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(np.diag(plan.entries), r.weights)


def test_monotone_coupling_all_mass_moves():
    r = make_histogram([1.0, 0.0])
    l = make_histogram([0.0, 1.0])
    plan, value = monotone_coupling_oracle([0.0, 1.0], r, l, p=1.0)
    np.testing.assert_allclose(plan.entries, [[0.0, 1.0], [0.0, 0.0]])
    assert value == pytest.approx(1.0)


def test_monotone_coupling_matches_cdf_formula():
    support = [0.0, 1.0, 2.0]
    r = make_histogram([0.2, 0.3, 0.5])
    l = make_histogram([0.5, 0.3, 0.2])
    _, value = monotone_coupling_oracle(support, r, l, p=1.0)
    assert cdf_transport_cost(support, r, l) == pytest.approx(0.6, rel=1e-14)
    assert value == pytest.approx(0.6, rel=1e-14)


def test_monotone_coupling_rejects_unsorted():
    r = make_histogram([1, 1])
    with pytest.raises(UnsortedSupport):
        monotone_coupling_oracle([1.0, 0.0], r, r)


def test_pipeline_parameter_formulas():
    # eta = eps / (4 ln n) and eps' = eps / (8 ||C||_inf).
    n = 10
    rng = np.random.default_rng(2)
    C_raw = rng.uniform(0, 1, size=(n, n))
    C_raw[0, 1] = 1.0  # pin the max
    C = CostMatrix(C_raw)
    r = make_histogram(rng.uniform(0.5, 1, size=n))
    l = make_histogram(rng.uniform(0.5, 1, size=n))
    res = approximate_ot(C, r, l, ApproxConfig(epsilon=0.4, algorithm=Algorithm.SINKHORN))
    assert res.eta == pytest.approx(0.4 / (4 * math.log(10)), rel=1e-15)
    assert res.eta == pytest.approx(0.0434294, rel=1e-5)
    assert res.eps_prime == pytest.approx(0.05, rel=1e-12)


@pytest.mark.parametrize("algorithm", [Algorithm.APDRCD, Algorithm.APDGCD, Algorithm.SINKHORN])
def test_pipeline_one_dimensional_guarantee(algorithm):
    support = np.array([0.0, 1.0, 2.0])
    r = make_histogram([0.2, 0.3, 0.5])
    l = make_histogram([0.5, 0.3, 0.2])
    C = CostMatrix(np.abs(support[:, None] - support[None, :]))
    _, ot_star = monotone_coupling_oracle(support, r, l, p=1.0)
    eps = 0.4
    res = approximate_ot(C, r, l, ApproxConfig(epsilon=eps, algorithm=algorithm, seed=11))
    assert res.report.converged
    assert marginal_violation(res.plan, r, l) <= 1e-10
    assert res.ot_value <= ot_star + eps
    assert res.ot_value == pytest.approx(ot_objective(C, res.plan), rel=1e-15)


def test_pipeline_solver_tolerance_is_half_eps_prime():
    support = np.array([0.0, 1.0])
    r = make_histogram([0.7, 0.3])
    l = make_histogram([0.3, 0.7])
    C = CostMatrix(np.abs(support[:, None] - support[None, :]))
    res = approximate_ot(C, r, l, ApproxConfig(epsilon=0.8, algorithm=Algorithm.APDRCD, seed=5))
    assert res.report.final_violation <= res.eps_prime / 2


def test_pipeline_zero_cost_returns_feasible_plan():
    C = CostMatrix(np.zeros((3, 3)))
    rng = np.random.default_rng(8)
    r = make_histogram(rng.uniform(0.1, 1, size=3))
    l = make_histogram(rng.uniform(0.1, 1, size=3))
    res = approximate_ot(C, r, l, ApproxConfig(epsilon=0.1))
    assert res.ot_value == 0.0
    assert marginal_violation(res.plan, r, l) <= 1e-12


def test_pipeline_deterministic_given_seed():
    support = np.linspace(0.0, 1.0, 4)
    rng = np.random.default_rng(21)
    r = make_histogram(rng.uniform(0.1, 1, size=4))
    l = make_histogram(rng.uniform(0.1, 1, size=4))
    C = CostMatrix(np.abs(support[:, None] - support[None, :]))
    cfg = ApproxConfig(epsilon=0.3, algorithm=Algorithm.APDRCD, seed=77)
    a = approximate_ot(C, r, l, cfg)
    b = approximate_ot(C, r, l, cfg)
    np.testing.assert_array_equal(a.plan.entries, b.plan.entries)
    assert a.ot_value == b.ot_value
