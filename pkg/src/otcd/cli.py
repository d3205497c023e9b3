"""Command-line entry point: solve, bench, and barycenter subcommands.

Exit codes: 0 success/converged, 1 usage or input error, 2 iteration budget
exhausted.  All randomness derives from --seed, so identical invocations
write byte-identical outputs (the lone exception is the measured wall_ms
column of the benchmark records CSV).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import bench
from .barycenter import (
    BarycenterProblem,
    barycenter_solve,
    cycle_graph,
    path_graph,
    read_graph_file,
    star_graph,
)
from .core import (
    CostMatrix,
    read_histogram_file,
    read_matrix_file,
    write_histogram_file,
    write_matrix_file,
)
from .dual import RegularizedProblem
from .errors import MaxItersExceeded, OTCDError
from .pipeline import Algorithm, ApproxConfig, approximate_ot, ot_objective
from .rounding import round_to_polytope
from .solver import CoordinateRule, default_max_iters, sinkhorn_solve, solve

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_BUDGET = 2

_FALLBACK_MAX_ITERS = 1_000_000  # when a zero marginal entry voids the guarantee-based default


def _write_trace_csv(path, trace) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("iteration,violation,dual_value,ot_value\n")
        for tp in trace:
            fh.write(f"{tp.iteration},{tp.violation!r},{tp.dual_value!r},{tp.ot_value!r}\n")


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def _float_list(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok]


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otcd", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="approximate one OT instance from files")
    p.add_argument("--cost", required=True, help="cost matrix file (n lines of n comma-separated reals)")
    p.add_argument("--r", required=True, dest="r_path", help="row marginal histogram file")
    p.add_argument("--l", required=True, dest="l_path", help="column marginal histogram file")
    p.add_argument("--eps", type=_positive_float, help="target accuracy for the full pipeline")
    p.add_argument("--eta", type=_positive_float, help="fixed regularization (requires --eps-prime)")
    p.add_argument("--eps-prime", type=_positive_float, help="residual tolerance for --eta mode")
    p.add_argument("--algo", choices=["apdrcd", "apdgcd", "sinkhorn"], default="apdrcd")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--trace-every", type=int, default=100)
    p.add_argument("--out", required=True, help="output plan file (written only on convergence)")
    p.add_argument("--log", default=None, help="trace CSV (written even when the budget runs out)")

    p = sub.add_parser("bench", help="benchmark sweep emitting record and summary CSVs")
    bsub = p.add_subparsers(dest="bench_mode", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--pairs", type=int, default=10)
    common.add_argument("--eta", type=_float_list, default=None, help="comma-separated regularizations")
    common.add_argument("--eps", type=_float_list, default=None, help="comma-separated target accuracies")
    common.add_argument("--algos", default="apdrcd,apdgcd", help="comma-separated algorithm names")
    common.add_argument("--budget", type=int, default=1000)
    common.add_argument("--trace-every", type=int, default=10)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--metric", choices=["l1", "l2", "sql2"], default="sql2")
    common.add_argument("--out", required=True, help="records CSV path")
    common.add_argument("--summary-out", default=None, help="ratio summary CSV (default: <out>.summary.csv)")
    ps = bsub.add_parser("synthetic", parents=[common], help="random square-on-background image pairs")
    ps.add_argument("--n", type=int, default=20, help="image side length in pixels")
    ps.add_argument("--fg", type=float, default=0.1, help="foreground area fraction")
    pi = bsub.add_parser("idx", parents=[common], help="image pairs drawn from an IDX container")
    pi.add_argument("--images", required=True, help="IDX image file")
    pi.add_argument("--resize", type=int, default=None, help="optional side length to resample to")

    p = sub.add_parser("barycenter", help="decentralized barycenter over an agent graph")
    p.add_argument("--graph", required=True, help="path|star|cycle or an edge-list file")
    p.add_argument("--m", type=int, default=None, help="agent count for the built-in graphs")
    p.add_argument("--inputs", required=True, help="directory of agent_<k>.csv histogram files")
    p.add_argument("--cost", default=None, help="shared cost matrix file (default: normalized squared 1-D grid)")
    p.add_argument("--eps", type=_positive_float, required=True)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--algo", choices=["rcd", "gcd"], default="rcd")
    p.add_argument("--L", default="auto", help="'auto' or an explicit smoothness upper bound")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output directory")
    return parser


def _report_budget_exhaustion(args, C, exc) -> int:
    # Partial trace is still written; the plan file is not.
    if args.log:
        _write_trace_csv(args.log, exc.report.trace)
    print(
        f"ot_value={ot_objective(C, exc.report.plan)!r} iterations={exc.report.iterations} "
        f"violation={exc.report.final_violation!r}"
    )
    print(f"error: {exc}", file=sys.stderr)
    return EXIT_BUDGET


def cmd_solve(args) -> int:
    if (args.eps is None) == (args.eta is None):
        print("error: exactly one of --eps / --eta is required", file=sys.stderr)
        return EXIT_USAGE
    if args.eta is not None and args.eps_prime is None:
        print("error: --eta mode requires --eps-prime", file=sys.stderr)
        return EXIT_USAGE

    C = CostMatrix(read_matrix_file(args.cost))
    r = read_histogram_file(args.r_path)
    l = read_histogram_file(args.l_path)

    if args.eps is not None:
        cfg = ApproxConfig(
            epsilon=args.eps,
            algorithm=Algorithm(args.algo),
            seed=args.seed,
            max_iters=args.max_iters,
            trace_every=args.trace_every,
        )
        try:
            result = approximate_ot(C, r, l, cfg)
        except MaxItersExceeded as exc:
            return _report_budget_exhaustion(args, C, exc)
        plan, report = result.plan, result.report
        ot_value, violation = result.ot_value, result.report.final_violation
    else:
        prob = RegularizedProblem(cost=C, r=r, l=l, eta=args.eta)
        max_iters = args.max_iters
        if max_iters is None:
            try:
                max_iters = default_max_iters(prob, args.eps_prime)
            except ValueError:
                max_iters = _FALLBACK_MAX_ITERS
        try:
            if args.algo == "sinkhorn":
                report = sinkhorn_solve(prob, args.eps_prime, max_iters, trace_every=args.trace_every)
            else:
                rule = CoordinateRule.GREEDY if args.algo == "apdgcd" else CoordinateRule.RANDOMIZED
                report = solve(
                    prob,
                    rule,
                    args.eps_prime,
                    max_iters=max_iters,
                    trace_every=args.trace_every,
                    seed=args.seed,
                )
        except MaxItersExceeded as exc:
            return _report_budget_exhaustion(args, C, exc)
        plan = round_to_polytope(report.plan, r, l)
        ot_value, violation = ot_objective(C, plan), report.final_violation

    if args.log:
        _write_trace_csv(args.log, report.trace)
    write_matrix_file(args.out, plan.entries)
    print(f"ot_value={ot_value!r} iterations={report.iterations} violation={violation!r}")
    if args.eps is not None and C.max_abs > 0:
        # Relative accuracy for cross-instance comparisons.
        print(f"eps_rel={args.eps / C.max_abs!r}")
    return EXIT_OK


def cmd_bench(args) -> int:
    if (args.eta is None) == (args.eps is None):
        print("error: exactly one of --eta / --eps is required", file=sys.stderr)
        return EXIT_USAGE
    if args.pairs < 1 or args.budget < 1:
        print("error: --pairs and --budget must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        algorithms = [Algorithm(name) for name in args.algos.split(",") if name]
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not algorithms:
        print("error: --algos must name at least one algorithm", file=sys.stderr)
        return EXIT_USAGE

    if args.bench_mode == "synthetic":
        pair_data = []
        for pair_id in range(args.pairs):
            spec = bench.SyntheticImageSpec(
                side=args.n,
                fg_fraction=args.fg,
                seed=int(np.random.SeedSequence((args.seed, bench.TAG_SYNTHETIC, pair_id)).generate_state(1, np.uint64)[0]),
            )
            r, l, C = bench.generate_synthetic_pair(spec, metric=args.metric)
            pair_data.append((r, l, C))
    else:
        pairs = bench.select_idx_pairs(args.images, args.pairs, args.seed)
        side = args.resize
        pair_data = []
        for i, j in pairs:
            hi, hj = bench.load_idx_images(args.images, [i, j], resize=side)
            n_pixels = hi.n
            edge = int(round(n_pixels ** 0.5))
            if edge * edge != n_pixels:
                print(f"error: images are not square ({n_pixels} pixels)", file=sys.stderr)
                return EXIT_USAGE
            pair_data.append((hi, hj, bench.grid_cost(edge, args.metric)))

    param_kind = "eta" if args.eta is not None else "eps"
    params = args.eta if args.eta is not None else args.eps
    records = bench.run_experiment(
        pair_data,
        algorithms,
        params,
        param_kind,
        seed=args.seed,
        iteration_budget=args.budget,
        trace_every=args.trace_every,
    )
    bench.write_records_csv(args.out, records)
    summary_path = args.summary_out or (args.out + ".summary.csv")
    bench.write_summary_csv(summary_path, bench.summarize_ratios(records))
    print(f"records={len(records)} out={args.out} summary={summary_path}")
    return EXIT_OK


def cmd_barycenter(args) -> int:
    by_index = {}
    for f in os.listdir(args.inputs):
        if not (f.startswith("agent_") and f.endswith(".csv")):
            continue
        try:
            k = int(f[len("agent_") : -len(".csv")])
        except ValueError:
            print(f"error: cannot parse agent index from {f!r}", file=sys.stderr)
            return EXIT_USAGE
        by_index[k] = f
    if not by_index:
        print(f"error: no agent_<k>.csv files in {args.inputs}", file=sys.stderr)
        return EXIT_USAGE
    m = len(by_index)
    if sorted(by_index) != list(range(m)):
        print(f"error: agent files must be agent_0.csv .. agent_{m - 1}.csv", file=sys.stderr)
        return EXIT_USAGE
    measures = [read_histogram_file(os.path.join(args.inputs, by_index[k])) for k in range(m)]

    builders = {"path": path_graph, "star": star_graph, "cycle": cycle_graph}
    if args.graph in builders:
        graph = builders[args.graph](args.m if args.m is not None else m)
    else:
        graph = read_graph_file(args.graph, m=args.m)
    if graph.node_count != m:
        print(
            f"error: graph has {graph.node_count} nodes but {m} agent files were found",
            file=sys.stderr,
        )
        return EXIT_USAGE

    n = measures[0].n
    if args.cost is not None:
        cost = CostMatrix(read_matrix_file(args.cost))
    else:
        grid = np.arange(n, dtype=np.float64)
        sq = (grid[:, None] - grid[None, :]) ** 2
        cost = CostMatrix(sq / sq.max())

    lipschitz = None if args.L == "auto" else float(args.L)
    prob = BarycenterProblem(
        measures=tuple(measures),
        costs=tuple([cost] * m),
        weights=np.full(m, 1.0 / m),
        epsilon=args.eps,
        graph=graph,
        lipschitz_bound=lipschitz,
    )
    rule = CoordinateRule.GREEDY if args.algo == "gcd" else CoordinateRule.RANDOMIZED
    result = barycenter_solve(prob, rule, args.iters, seed=args.seed)

    os.makedirs(args.out, exist_ok=True)
    for k, hist in enumerate(result.barycenters):
        write_histogram_file(os.path.join(args.out, f"barycenter_{k}.csv"), hist)
    with open(os.path.join(args.out, "trace.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write("t,consensus_residual,objective\n")
        for row in result.trace:
            fh.write(f"{row.t},{row.consensus_residual!r},{row.objective!r}\n")
    print(f"agents={m} rounds={args.iters} residual={result.trace[-1].consensus_residual!r}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; the CLI contract uses 1.
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        if args.command == "solve":
            return cmd_solve(args)
        if args.command == "bench":
            return cmd_bench(args)
        return cmd_barycenter(args)
    except (OTCDError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
