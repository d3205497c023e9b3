"""Entropic dual objective, its gradients, and the closed-form primal map.

For dual variables lambda = (alpha, beta) the regularized coupling is

    X_ij(lambda) = exp((-C_ij + alpha_i + beta_j) / eta - 1)

and the dual objective is

    phi(lambda) = eta * sum_ij X_ij(lambda) - <alpha, r> - <beta, l>,

a smooth convex function whose gradient stacks the marginal residuals of
X(lambda) against (r, l).  Its gradient is 4/eta Lipschitz in the l2 norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import CostMatrix, Histogram, TransportPlan
from .errors import DimensionMismatch, ExponentOverflow, IndexOutOfRange, NonFiniteEntry

# Largest exponent fed to exp(); e^700 is representable, anything above risks inf.
EXP_LIMIT = 700.0


@dataclass(frozen=True)
class DualPoint:
    """Stacked dual variables (alpha for row constraints, beta for columns)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.ascontiguousarray(self.alpha, dtype=np.float64)
        b = np.ascontiguousarray(self.beta, dtype=np.float64)
        if a.ndim != 1 or b.ndim != 1 or a.size != b.size:
            raise DimensionMismatch("alpha and beta must be 1-D vectors of equal length")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise NonFiniteEntry("dual point contains NaN or infinite entries")
        a.flags.writeable = False
        b.flags.writeable = False
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def n(self) -> int:
        return self.alpha.size

    def stacked(self) -> np.ndarray:
        """The 2n-vector (alpha; beta)."""
        return np.concatenate([self.alpha, self.beta])

    @staticmethod
    def zeros(n: int) -> "DualPoint":
        return DualPoint(np.zeros(n), np.zeros(n))

    @staticmethod
    def from_stacked(v) -> "DualPoint":
        v = np.asarray(v, dtype=np.float64)
        if v.ndim != 1 or v.size % 2 != 0:
            raise DimensionMismatch("stacked dual vector must have even length")
        n = v.size // 2
        return DualPoint(v[:n], v[n:])


@dataclass(frozen=True)
class RegularizedProblem:
    """An entropic OT instance: cost, marginals, and regularization strength."""

    cost: CostMatrix
    r: Histogram
    l: Histogram
    eta: float

    def __post_init__(self):
        if self.cost.n != self.r.n or self.cost.n != self.l.n:
            raise DimensionMismatch(
                f"cost is {self.cost.n}x{self.cost.n} but marginals have sizes {self.r.n}, {self.l.n}"
            )
        if not (self.eta > 0):
            raise ValueError(f"eta must be positive, got {self.eta}")

    @property
    def n(self) -> int:
        return self.cost.n

    @property
    def lipschitz(self) -> float:
        """Gradient Lipschitz constant of the dual objective: 4 / eta."""
        return 4.0 / self.eta


def plan_from_arrays(prob: RegularizedProblem, alpha: np.ndarray, beta: np.ndarray) -> np.ndarray:
    """X(lambda) as a raw ndarray, for solver-internal hot loops."""
    e = (-prob.cost.entries + alpha[:, None] + beta[None, :]) / prob.eta - 1.0
    if e.max() > EXP_LIMIT:
        raise ExponentOverflow(f"primal-map exponent {e.max():.3g} exceeds {EXP_LIMIT}")
    return np.exp(e)


def primal_plan_array(prob: RegularizedProblem, lam: DualPoint) -> np.ndarray:
    return plan_from_arrays(prob, lam.alpha, lam.beta)


def primal_map(prob: RegularizedProblem, lam: DualPoint) -> TransportPlan:
    """Closed-form coupling X(lambda); entries are strictly positive."""
    return TransportPlan(primal_plan_array(prob, lam))


def dual_value(prob: RegularizedProblem, lam: DualPoint) -> float:
    """phi(lambda), built from the same exponential terms as the primal map."""
    mass = float(primal_plan_array(prob, lam).sum())
    return prob.eta * mass - float(lam.alpha @ prob.r.weights) - float(lam.beta @ prob.l.weights)


def coordinate_gradient_from_arrays(
    prob: RegularizedProblem, alpha: np.ndarray, beta: np.ndarray, i: int
) -> float:
    n = prob.n
    if not 0 <= i < 2 * n:
        raise IndexOutOfRange(f"coordinate {i} outside [0, {2 * n})")
    if i < n:
        e = (-prob.cost.entries[i, :] + alpha[i] + beta) / prob.eta - 1.0
        target = prob.r.weights[i]
    else:
        j = i - n
        e = (-prob.cost.entries[:, j] + alpha + beta[j]) / prob.eta - 1.0
        target = prob.l.weights[j]
    if e.max() > EXP_LIMIT:
        raise ExponentOverflow(f"primal-map exponent {e.max():.3g} exceeds {EXP_LIMIT}")
    return float(np.exp(e).sum() - target)


def coordinate_gradient(prob: RegularizedProblem, lam: DualPoint, i: int) -> float:
    """Partial derivative of phi along coordinate i of the stacked duals.

    Coordinates [0, n) differentiate along alpha (row residuals), [n, 2n)
    along beta (column residuals).  Costs O(n) exponential evaluations: only
    the needed row or column of X(lambda) is formed.
    """
    return coordinate_gradient_from_arrays(prob, lam.alpha, lam.beta, i)


def gradient_from_plan(plan: np.ndarray, prob: RegularizedProblem) -> np.ndarray:
    """Stacked marginal residuals (X 1 - r; X^T 1 - l) of an explicit plan."""
    return np.concatenate([plan.sum(axis=1) - prob.r.weights, plan.sum(axis=0) - prob.l.weights])


def full_gradient(prob: RegularizedProblem, lam: DualPoint) -> np.ndarray:
    """Gradient of phi as a 2n-vector, in one pass over X(lambda)."""
    return gradient_from_plan(primal_plan_array(prob, lam), prob)
