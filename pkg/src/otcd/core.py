"""Domain types shared by every solver: histograms, cost matrices, plans.

All types are immutable after construction (the backing arrays are marked
read-only) and all operations are pure, so values can be shared freely
across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyVector,
    NegativeEntry,
    NonFiniteEntry,
)

SIMPLEX_ATOL = 1e-9


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise NonFiniteEntry(f"{what} contains NaN or infinite entries")


def _check_nonnegative(a: np.ndarray, what: str) -> None:
    if np.any(a < 0):
        raise NegativeEntry(f"{what} contains negative entries")


@dataclass(frozen=True)
class Histogram:
    """Probability vector on the simplex (entries >= 0, sum close to 1)."""

    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(np.atleast_1d(self.weights))
        if w.ndim != 1 or w.size == 0:
            raise EmptyVector("histogram weights must be a nonempty vector")
        _check_finite(w, "histogram")
        _check_nonnegative(w, "histogram")
        total = float(w.sum())
        if abs(total - 1.0) > SIMPLEX_ATOL:
            raise ValueError(
                f"histogram mass {total!r} is not 1 within {SIMPLEX_ATOL}; "
                "use make_histogram to normalize raw weights"
            )
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.weights.size

    def min_entry(self) -> float:
        return float(self.weights.min())


@dataclass(frozen=True)
class CostMatrix:
    """Dense nonnegative square cost matrix with its max entry cached."""

    entries: np.ndarray
    max_abs: float = field(init=False)

    def __post_init__(self):
        c = _frozen(np.atleast_2d(self.entries))
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.size == 0:
            raise DimensionMismatch(f"cost matrix must be square and nonempty, got shape {c.shape}")
        _check_finite(c, "cost matrix")
        _check_nonnegative(c, "cost matrix")
        object.__setattr__(self, "entries", c)
        object.__setattr__(self, "max_abs", float(c.max()))

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class TransportPlan:
    """Dense nonnegative coupling matrix.

    Solver iterates may carry arbitrary total mass (sub- or super-stochastic);
    plans returned by the approximation pipeline sum to 1 within 1e-9.
    """

    entries: np.ndarray

    def __post_init__(self):
        x = _frozen(np.atleast_2d(self.entries))
        if x.ndim != 2 or x.size == 0:
            raise DimensionMismatch(f"transport plan must be a nonempty matrix, got shape {x.shape}")
        _check_finite(x, "transport plan")
        _check_nonnegative(x, "transport plan")
        object.__setattr__(self, "entries", x)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    def total_mass(self) -> float:
        return float(self.entries.sum())


@dataclass(frozen=True)
class Marginals:
    """Row and column sums of a transport plan."""

    row: np.ndarray
    col: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row", _frozen(self.row))
        object.__setattr__(self, "col", _frozen(self.col))


def make_histogram(weights) -> Histogram:
    """Normalize raw nonnegative weights into a Histogram.

    Raises EmptyVector for an empty or zero-mass input, NonFiniteEntry and
    NegativeEntry for invalid entries.  Already-normalized input is returned
    unchanged up to the division by its own sum.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size == 0:
        raise EmptyVector("weights must be a nonempty 1-D vector")
    _check_finite(w, "weights")
    _check_nonnegative(w, "weights")
    total = float(w.sum())
    if total <= 0.0:
        raise EmptyVector("weights carry no mass (sum is zero)")
    return Histogram(w / total)


def marginals(plan: TransportPlan) -> Marginals:
    """Row sums and column sums of the plan."""
    x = plan.entries
    return Marginals(row=x.sum(axis=1), col=x.sum(axis=0))


def marginal_violation(plan: TransportPlan, r: Histogram, l: Histogram) -> float:
    """l1 distance of the plan's marginals to the target marginals.

    Zero exactly when the plan lies on the transportation polytope U(r, l).
    """
    x = plan.entries
    if x.shape != (r.n, l.n):
        raise DimensionMismatch(f"plan shape {x.shape} does not match marginals ({r.n}, {l.n})")
    return float(np.abs(x.sum(axis=1) - r.weights).sum() + np.abs(x.sum(axis=0) - l.weights).sum())


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
# Histogram file: one decimal real per line, '#' comment lines ignored.
# Matrix file (cost or plan): n lines of n comma-separated reals.


def read_histogram_file(path) -> Histogram:
    values = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            values.append(float(line))
    return make_histogram(np.asarray(values, dtype=np.float64))


def write_histogram_file(path, hist: Histogram) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for v in hist.weights:
            fh.write(f"{float(v)!r}\n")


def read_matrix_file(path) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            rows.append([float(tok) for tok in line.split(",")])
    if not rows:
        raise EmptyVector(f"no rows found in {path}")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise DimensionMismatch(f"ragged rows in {path}")
    return np.asarray(rows, dtype=np.float64)


def write_matrix_file(path, matrix: np.ndarray) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for row in m:
            fh.write(",".join(repr(float(v)) for v in row))
            fh.write("\n")
