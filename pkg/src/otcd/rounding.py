"""Exact repair of a near-feasible plan onto the transportation polytope.

The scheme is scale-then-patch: clip each row to its target mass, then each
column, then restore the missing mass with the rank-one outer product of the
row and column deficits.  The output satisfies the marginal constraints
exactly and moves at most twice the input's l1 marginal residual:

    ||X_hat - X||_1 <= 2 (||X 1 - r||_1 + ||X^T 1 - l||_1).
"""

from __future__ import annotations

import numpy as np

from .core import Histogram, TransportPlan
from .errors import DimensionMismatch, NegativeEntry, NonFiniteEntry


def round_to_polytope(plan: TransportPlan, r: Histogram, l: Histogram) -> TransportPlan:
    """Project ``plan`` onto U(r, l): row sums become r, column sums become l."""
    x = np.array(plan.entries, dtype=np.float64)
    if x.shape != (r.n, l.n):
        raise DimensionMismatch(f"plan shape {x.shape} does not match marginals ({r.n}, {l.n})")
    if not np.all(np.isfinite(x)):
        raise NonFiniteEntry("plan contains NaN or infinite entries")
    if np.any(x < 0):
        raise NegativeEntry("plan contains negative entries")

    row = x.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(row > 0, np.minimum(1.0, r.weights / row), 1.0)
    x *= scale[:, None]

    col = x.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(col > 0, np.minimum(1.0, l.weights / col), 1.0)
    x *= scale[None, :]

    # After clipping, row sums <= r and column sums <= l, so both deficits are
    # nonnegative and share the same total mass (clamped against roundoff).
    err_r = np.maximum(r.weights - x.sum(axis=1), 0.0)
    err_l = np.maximum(l.weights - x.sum(axis=0), 0.0)
    deficit = err_r.sum()
    if deficit > 0:
        x += np.outer(err_r, err_l) / deficit
    return TransportPlan(x)
