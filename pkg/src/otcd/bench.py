"""Data generation, evaluation metrics, and experiment orchestration.

Synthetic instances are random square-on-background images flattened into
histograms with a pixel-grid ground cost; real images come from IDX
containers.  The harness sweeps (pair, algorithm, parameter) cells with a
shared iteration budget, recording the marginal residual d(X), the transport
cost, and the dual value at every trace point, and summarizes pairwise
algorithm comparisons through the log competitive ratio.
"""

from __future__ import annotations

import csv
import math
import os
import struct
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import CostMatrix, Histogram, make_histogram, marginal_violation
from .dual import RegularizedProblem
from .errors import BadMagic, IndexOutOfRange, MaxItersExceeded, NonPositiveDistance, TruncatedFile
from .pipeline import Algorithm, ApproxConfig, approximate_ot
from .seeding import TAG_IDX_PAIRS, TAG_SYNTHETIC, substream
from .solver import CoordinateRule, sinkhorn_solve, solve

CSV_HEADER = ["pair_id", "algorithm", "param", "iteration", "d_x", "ot_value", "dual_value", "wall_ms"]
SUMMARY_HEADER = ["algo_1", "algo_2", "param", "iteration", "ratio_max", "ratio_median", "ratio_min"]

IDX_IMAGE_MAGIC = 0x00000803


@dataclass(frozen=True)
class SyntheticImageSpec:
    """Random image pair: uniform background with a brighter random square."""

    side: int = 20
    fg_fraction: float = 0.1  # area fraction covered by the square
    bg_high: float = 1.0
    fg_high: float = 50.0
    seed: int = 0

    def __post_init__(self):
        if self.side < 2:
            raise ValueError("side must be at least 2 pixels")
        if not 0.0 < self.fg_fraction < 1.0:
            raise ValueError(f"fg_fraction must lie in (0, 1), got {self.fg_fraction}")


@dataclass(frozen=True)
class ExperimentRecord:
    pair_id: int
    algorithm: str
    param: float
    iteration: int
    d_x: float
    ot_value: float
    dual_value: float
    wall_ms: float


def grid_cost(side: int, metric: str = "sql2") -> CostMatrix:
    """Ground cost between pixel-grid coordinates, normalized to max 1."""
    ii, jj = np.divmod(np.arange(side * side), side)
    di = ii[:, None] - ii[None, :]
    dj = jj[:, None] - jj[None, :]
    if metric == "sql2":
        c = di.astype(np.float64) ** 2 + dj.astype(np.float64) ** 2
    elif metric == "l2":
        c = np.sqrt(di.astype(np.float64) ** 2 + dj.astype(np.float64) ** 2)
    elif metric == "l1":
        c = np.abs(di).astype(np.float64) + np.abs(dj).astype(np.float64)
    else:
        raise ValueError(f"unknown metric {metric!r} (expected l1, l2, or sql2)")
    return CostMatrix(c / c.max())


def foreground_side(side: int, fg_fraction: float) -> int:
    """Edge length of a square covering ``fg_fraction`` of the image area."""
    return min(max(int(round(side * math.sqrt(fg_fraction))), 1), side)


def _draw_image(rng: np.random.Generator, spec: SyntheticImageSpec) -> np.ndarray:
    img = rng.uniform(0.0, spec.bg_high, size=(spec.side, spec.side))
    fg_side = foreground_side(spec.side, spec.fg_fraction)
    top = int(rng.integers(0, spec.side - fg_side + 1))
    left = int(rng.integers(0, spec.side - fg_side + 1))
    img[top : top + fg_side, left : left + fg_side] = rng.uniform(0.0, spec.fg_high, size=(fg_side, fg_side))
    return img


def generate_synthetic_pair(spec: SyntheticImageSpec, metric: str = "sql2"):
    """Two independent synthetic images as histograms, plus the grid cost."""
    rng = substream(spec.seed, TAG_SYNTHETIC)
    a = make_histogram(_draw_image(rng, spec).ravel())
    b = make_histogram(_draw_image(rng, spec).ravel())
    return a, b, grid_cost(spec.side, metric)


def load_idx_images(path, indices, resize: int | None = None) -> list[Histogram]:
    """Parse an IDX image container and return the selected images.

    Layout: big-endian uint32 magic 0x00000803, count, rows, cols, then
    count*rows*cols unsigned bytes row-major.  Every pixel gets a 1e-6 floor
    before normalization so the histograms are strictly positive.
    """
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) < 16:
            raise TruncatedFile(f"{path}: header is {len(header)} bytes, expected 16")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGE_MAGIC:
            raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
        payload = fh.read(count * rows * cols)
    if len(payload) < count * rows * cols:
        raise TruncatedFile(f"{path}: payload is {len(payload)} bytes, expected {count * rows * cols}")
    data = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows, cols)

    out = []
    for idx in indices:
        if not 0 <= idx < count:
            raise IndexOutOfRange(f"image index {idx} outside [0, {count})")
        img = data[idx].astype(np.float64)
        if resize is not None:
            sel_r = np.floor(np.linspace(0, rows, resize, endpoint=False)).astype(int)
            sel_c = np.floor(np.linspace(0, cols, resize, endpoint=False)).astype(int)
            img = img[np.ix_(sel_r, sel_c)]
        out.append(make_histogram(img.ravel() + 1e-6))
    return out


def idx_image_count(path) -> int:
    with open(path, "rb") as fh:
        header = fh.read(16)
    if len(header) < 16:
        raise TruncatedFile(f"{path}: header is {len(header)} bytes, expected 16")
    magic, count, _, _ = struct.unpack(">IIII", header)
    if magic != IDX_IMAGE_MAGIC:
        raise BadMagic(f"{path}: magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}")
    return count


def select_idx_pairs(path, pairs: int, seed: int) -> list[tuple[int, int]]:
    """Seeded draw of ``pairs`` disjoint index pairs from an IDX container."""
    count = idx_image_count(path)
    if count < 2 * pairs:
        raise IndexOutOfRange(f"{path} holds {count} images, need {2 * pairs}")
    rng = substream(seed, TAG_IDX_PAIRS)
    chosen = rng.choice(count, size=2 * pairs, replace=False)
    return [(int(chosen[2 * i]), int(chosen[2 * i + 1])) for i in range(pairs)]


def competitive_ratio(d1: float, d2: float) -> float:
    """Natural log of d1/d2; positive when the second algorithm is closer."""
    if d1 <= 0 or d2 <= 0:
        raise NonPositiveDistance(f"distances must be positive, got {d1}, {d2}")
    return math.log(d1 / d2)


def _run_cell(pair_id, algorithm, param, param_kind, r, l, C, seed, budget, trace_every):
    """One (pair, algorithm, parameter) cell; returns its records.

    wall_ms is the monotonic-clock time between consecutive trace points
    (the per-batch iteration cost), captured live through the solver's trace
    callback.
    """
    records = []
    clock = {"last_ns": time.monotonic_ns()}

    def on_trace(tp):
        now = time.monotonic_ns()
        records.append(
            ExperimentRecord(
                pair_id=pair_id,
                algorithm=algorithm.value,
                param=param,
                iteration=tp.iteration,
                d_x=tp.violation,
                ot_value=tp.ot_value,
                dual_value=tp.dual_value,
                wall_ms=(now - clock["last_ns"]) / 1e6,
            )
        )
        clock["last_ns"] = now

    if param_kind == "eta":
        prob = RegularizedProblem(cost=C, r=r, l=l, eta=param)
        tiny = 1e-300  # residual target is unreachable: run to the budget
        try:
            if algorithm is Algorithm.SINKHORN:
                sinkhorn_solve(prob, tiny, budget, trace_every, on_trace=on_trace)
            else:
                rule = CoordinateRule.GREEDY if algorithm is Algorithm.APDGCD else CoordinateRule.RANDOMIZED
                solve(prob, rule, tiny, max_iters=budget, trace_every=trace_every, seed=seed, on_trace=on_trace)
        except MaxItersExceeded:
            pass
    else:
        cfg = ApproxConfig(epsilon=param, algorithm=algorithm, seed=seed, max_iters=budget, trace_every=trace_every)
        try:
            result = approximate_ot(C, r, l, cfg, on_trace=on_trace)
        except MaxItersExceeded as exc:
            warnings.warn(f"cell (pair {pair_id}, {algorithm.value}, {param}) hit the budget: {exc}")
            return records  # keep the partial trace rows, continue the sweep
        now = time.monotonic_ns()
        # Post-rounding checkpoint against the original marginals.
        records.append(
            ExperimentRecord(
                pair_id=pair_id,
                algorithm=algorithm.value,
                param=param,
                iteration=result.report.iterations + 1,
                d_x=marginal_violation(result.plan, r, l),
                ot_value=result.ot_value,
                dual_value=records[-1].dual_value if records else 0.0,
                wall_ms=(now - clock["last_ns"]) / 1e6,
            )
        )
    return records


def run_experiment(
    pair_data: list,
    algorithms: list,
    params: list,
    param_kind: str,
    seed: int,
    iteration_budget: int,
    trace_every: int = 10,
) -> list[ExperimentRecord]:
    """Sweep every (pair, algorithm, parameter) cell up to the shared budget.

    ``pair_data`` holds (r, l, C) triples.  ``param_kind`` is "eta" (run the
    raw solver at fixed regularization, reporting the unregularized transport
    cost of the averaged iterate) or "eps" (full approximation pipeline).
    Cells run independently; OTX_THREADS > 1 runs them in a thread pool and
    the merged records are sorted back into a schedule-independent order.
    Note the wall_ms column is measured time between trace points and is the
    one column that cannot be bitwise reproducible across runs.
    """
    if param_kind not in ("eta", "eps"):
        raise ValueError(f"param_kind must be 'eta' or 'eps', got {param_kind!r}")
    if not pair_data or not algorithms or not params:
        raise ValueError("pairs, algorithms, and params must all be nonempty")

    cells = []
    for pair_id, (r, l, C) in enumerate(pair_data):
        for algorithm in algorithms:
            for param in params:
                # One solver stream per pair, derived from the master seed.
                cell_seed = int(np.random.SeedSequence((seed, pair_id)).generate_state(1, np.uint64)[0])
                cells.append((pair_id, algorithm, param, r, l, C, cell_seed))

    def run(cell):
        pair_id, algorithm, param, r, l, C, cell_seed = cell
        return _run_cell(pair_id, algorithm, param, param_kind, r, l, C, cell_seed, iteration_budget, trace_every)

    workers = int(os.environ.get("OTX_THREADS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, cells))
    else:
        chunks = [run(cell) for cell in cells]

    records = [rec for chunk in chunks for rec in chunk]
    records.sort(key=lambda rec: (rec.pair_id, rec.algorithm, rec.param, rec.iteration))
    return records


@dataclass(frozen=True)
class RatioSummary:
    algo_1: str
    algo_2: str
    param: float
    iteration: int
    ratio_max: float
    ratio_median: float
    ratio_min: float


def summarize_ratios(records: list) -> list[RatioSummary]:
    """Max/median/min of log(d1/d2) across pairs, per algorithm pair and trace point.

    Pairs where either distance is exactly zero (a plan landed on the
    polytope bit-exactly) are left out: their ratio is undefined.
    """
    by_key = {}
    for rec in records:
        by_key.setdefault((rec.algorithm, rec.param, rec.iteration), {})[rec.pair_id] = rec.d_x
    algos = sorted({rec.algorithm for rec in records})
    params = sorted({rec.param for rec in records})
    iters = sorted({rec.iteration for rec in records})
    out = []
    for a1 in algos:
        for a2 in algos:
            if a2 <= a1:
                continue
            for param in params:
                for it in iters:
                    d1s = by_key.get((a1, param, it), {})
                    d2s = by_key.get((a2, param, it), {})
                    shared = sorted(
                        p for p in set(d1s) & set(d2s) if d1s[p] > 0 and d2s[p] > 0
                    )
                    if not shared:
                        continue
                    ratios = [competitive_ratio(d1s[p], d2s[p]) for p in shared]
                    out.append(
                        RatioSummary(
                            algo_1=a1,
                            algo_2=a2,
                            param=param,
                            iteration=it,
                            ratio_max=float(np.max(ratios)),
                            ratio_median=float(np.median(ratios)),
                            ratio_min=float(np.min(ratios)),
                        )
                    )
    return out


def write_records_csv(path, records: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(
                [
                    rec.pair_id,
                    rec.algorithm,
                    repr(rec.param),
                    rec.iteration,
                    repr(rec.d_x),
                    repr(rec.ot_value),
                    repr(rec.dual_value),
                    repr(rec.wall_ms),
                ]
            )


def read_records_csv(path) -> list[ExperimentRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError(f"unexpected header {header}")
        for row in reader:
            records.append(
                ExperimentRecord(
                    pair_id=int(row[0]),
                    algorithm=row[1],
                    param=float(row[2]),
                    iteration=int(row[3]),
                    d_x=float(row[4]),
                    ot_value=float(row[5]),
                    dual_value=float(row[6]),
                    wall_ms=float(row[7]),
                )
            )
    return records


def write_summary_csv(path, summaries: list) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for s in summaries:
            writer.writerow(
                [s.algo_1, s.algo_2, repr(s.param), s.iteration, repr(s.ratio_max), repr(s.ratio_median), repr(s.ratio_min)]
            )
