"""Decentralized Wasserstein-barycenter approximation over an agent network.

Each agent k holds a histogram r_k and cost C_k and talks only to its graph
neighbors.  The consensus constraint q_1 = ... = q_m is encoded through the
graph Laplacian, and the dual is driven by accelerated coordinate descent:
every synchronous round mixes the per-agent dual vectors, exchanges the
softmax-mixture gradients of the smoothed transport conjugate with the
neighbors, performs a single-coordinate gradient step on each agent's
accumulator, and refreshes the running dual and primal averages.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import Histogram
from .errors import (
    DimensionMismatch,
    DisconnectedGraph,
    NeighborAccessViolation,
    SelfLoop,
)
from .seeding import TAG_BARYCENTER, substream
from .solver import CoordinateRule


def laplacian(edges, m: int) -> np.ndarray:
    """Graph Laplacian: -1 on edges, degree on the diagonal, 0 elsewhere."""
    W = np.zeros((m, m))
    seen = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if i == j:
            raise SelfLoop(f"self-loop at node {i}")
        if not (0 <= i < m and 0 <= j < m):
            raise DisconnectedGraph(f"edge ({i}, {j}) references a node outside [0, {m})")
        if (min(i, j), max(i, j)) in seen:
            continue
        seen.add((min(i, j), max(i, j)))
        W[i, j] = W[j, i] = -1.0
        W[i, i] += 1.0
        W[j, j] += 1.0
    # Connectivity check (BFS over the accepted edge set).
    if m < 2 or not seen:
        raise DisconnectedGraph("need at least two connected agents")
    adj = {i: [] for i in range(m)}
    for i, j in seen:
        adj[i].append(j)
        adj[j].append(i)
    frontier = [0]
    visited = {0}
    while frontier:
        node = frontier.pop()
        for nb in adj[node]:
            if nb not in visited:
                visited.add(nb)
                frontier.append(nb)
    if len(visited) != m:
        raise DisconnectedGraph(f"graph is disconnected ({len(visited)} of {m} nodes reachable)")
    return W


@dataclass(frozen=True)
class NetworkGraph:
    """Undirected connected agent graph with its Laplacian."""

    node_count: int
    edges: tuple
    laplacian: np.ndarray

    @staticmethod
    def from_edges(edges, m: int) -> "NetworkGraph":
        W = laplacian(edges, m)
        W.flags.writeable = False
        canon = tuple(sorted({(min(int(i), int(j)), max(int(i), int(j))) for i, j in edges}))
        return NetworkGraph(node_count=m, edges=canon, laplacian=W)

    def neighbors(self, k: int) -> tuple:
        return tuple(sorted({j if i == k else i for i, j in self.edges if k in (i, j)}))

    def degree(self, k: int) -> int:
        return int(self.laplacian[k, k])


def path_graph(m: int) -> NetworkGraph:
    return NetworkGraph.from_edges([(i, i + 1) for i in range(m - 1)], m)


def cycle_graph(m: int) -> NetworkGraph:
    if m == 2:
        return path_graph(2)
    return NetworkGraph.from_edges([(i, (i + 1) % m) for i in range(m)], m)


def star_graph(m: int) -> NetworkGraph:
    return NetworkGraph.from_edges([(0, i) for i in range(1, m)], m)


def read_graph_file(path, m: int | None = None) -> NetworkGraph:
    """Edge list file: one '<i> <j>' pair per line, 0-indexed; '#' comments."""
    edges = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            i, j = line.split()
            edges.append((int(i), int(j)))
    if m is None:
        m = max((max(i, j) for i, j in edges), default=-1) + 1
    return NetworkGraph.from_edges(edges, m)


def consensus_residual(q: Sequence, graph: NetworkGraph) -> float:
    """sqrt(q^T (W_bar kron I_n) q), evaluated blockwise.

    Zero exactly when all blocks agree; never materializes the Kronecker
    product.
    """
    vecs = [np.asarray(getattr(h, "weights", h), dtype=np.float64) for h in q]
    if len(vecs) != graph.node_count:
        raise DimensionMismatch(f"{len(vecs)} blocks for a graph on {graph.node_count} nodes")
    n = vecs[0].size
    if any(v.size != n for v in vecs):
        raise DimensionMismatch("all blocks must have the same length")
    Q = np.stack(vecs)
    quad = float((graph.laplacian * (Q @ Q.T)).sum())
    return math.sqrt(max(quad, 0.0))


class GradientMailbox:
    """Per-round gradient exchange restricted to graph edges.

    fetch() refuses any (receiver, sender) pair that is not an edge, so the
    agent updates provably read neighbor gradients only.
    """

    def __init__(self, graph: NetworkGraph):
        self._graph = graph
        self._inbox = {}

    def post(self, sender: int, grad: np.ndarray) -> None:
        self._inbox[sender] = grad

    def fetch(self, receiver: int, sender: int) -> np.ndarray:
        edge = (min(receiver, sender), max(receiver, sender))
        if receiver == sender or edge not in self._graph.edges:
            raise NeighborAccessViolation(
                f"agent {receiver} may not read the gradient of non-neighbor {sender}"
            )
        return self._inbox[sender]


def smooth_measure(h: Histogram, epsilon: float) -> Histogram:
    """Pull a histogram away from the simplex boundary.

    (1 - eps/8)(w + eps/(n(8 - eps))) stays on the simplex and is strictly
    positive for 0 < eps < 8.
    """
    if not 0.0 < epsilon < 8.0:
        raise ValueError(f"epsilon must lie in (0, 8), got {epsilon}")
    n = h.n
    return Histogram((1.0 - epsilon / 8.0) * (h.weights + epsilon / (n * (8.0 - epsilon))))


def softmax_transport_gradient(lam: np.ndarray, cost: np.ndarray, marginal: np.ndarray, gamma: float) -> np.ndarray:
    """Gradient of the smoothed-transport conjugate with first marginal fixed.

    Entry i mixes the column softmaxes of (lam_i - C_ij)/gamma weighted by the
    marginal, so the output lies on the simplex.  Columns are stabilized by
    max subtraction; no overflow is possible.
    """
    z = (lam[:, None] - cost) / gamma
    z = z - z.max(axis=0, keepdims=True)
    e = np.exp(z)
    soft = e / e.sum(axis=0, keepdims=True)
    return soft @ marginal


def conjugate_value(lam: np.ndarray, cost: np.ndarray, marginal: np.ndarray, gamma: float) -> float:
    """Value of the smoothed-transport conjugate (log-sum-exp form)."""
    z = (lam[:, None] - cost) / gamma
    zmax = z.max(axis=0)
    lse = zmax + np.log(np.exp(z - zmax).sum(axis=0))
    return float(gamma * (marginal @ lse))


def conjugate_gradient(prob: "BarycenterProblem", k: int, lam: np.ndarray) -> np.ndarray:
    """Agent k's conjugate gradient at lam, with its stored measure and cost.

    The solver applies the same formula to the boundary-smoothed measures it
    derives at startup.
    """
    return softmax_transport_gradient(
        np.asarray(lam, dtype=np.float64),
        prob.costs[k].entries,
        prob.measures[k].weights,
        prob.gamma(k),
    )


@dataclass(frozen=True)
class BarycenterProblem:
    """m agents with measures r_k, costs C_k, simplex weights, and accuracy."""

    measures: tuple
    costs: tuple
    weights: np.ndarray
    epsilon: float
    graph: NetworkGraph
    lipschitz_bound: float | None = None

    def __post_init__(self):
        m = self.graph.node_count
        if len(self.measures) != m or len(self.costs) != m:
            raise DimensionMismatch(
                f"{len(self.measures)} measures / {len(self.costs)} costs for {m} agents"
            )
        n = self.measures[0].n
        if n < 2:
            raise DimensionMismatch("barycenter problems need n >= 2 support points")
        for h in self.measures:
            if h.n != n:
                raise DimensionMismatch("all measures must share the support size")
        for c in self.costs:
            if c.n != n:
                raise DimensionMismatch("all cost matrices must match the support size")
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (m,) or np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be strictly positive and sum to 1")
        if not 0.0 < self.epsilon < 8.0:
            raise ValueError(f"epsilon must lie in (0, 8), got {self.epsilon}")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "measures", tuple(self.measures))
        object.__setattr__(self, "costs", tuple(self.costs))

    @property
    def m(self) -> int:
        return self.graph.node_count

    @property
    def n(self) -> int:
        return self.measures[0].n

    def gamma(self, k: int) -> float:
        """Per-agent regularizer eps / (4 m w_k ln n)."""
        return self.epsilon / (4.0 * self.m * float(self.weights[k]) * math.log(self.n))


def power_iteration_top_eigenvalue(matrix: np.ndarray, iters: int = 20) -> float:
    """Largest eigenvalue estimate of a symmetric PSD matrix.

    Starts from a fixed pseudo-random vector: structured starts (ramps,
    constants) can be exactly orthogonal to the top eigenvector of a graph
    Laplacian.
    """
    m = matrix.shape[0]
    v = substream(0x9E3779B9, 0).standard_normal(m)
    v /= np.linalg.norm(v)
    for _ in range(iters):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
    return float(v @ (matrix @ v))


def default_lipschitz(prob: BarycenterProblem) -> float:
    """Safe gradient-smoothness bound: lam_max(W_bar) * sum_k m / gamma(k)."""
    lam_max = power_iteration_top_eigenvalue(prob.graph.laplacian)
    return lam_max * sum(prob.m / prob.gamma(k) for k in range(prob.m))


def advance_alpha(A: float, L: float) -> tuple[float, float]:
    """Next step size and its accumulator: largest root of 2 L a^2 = A + a."""
    alpha = (1.0 + math.sqrt(1.0 + 8.0 * L * A)) / (4.0 * L)
    return alpha, A + alpha


@dataclass(frozen=True)
class BarycenterTraceRow:
    t: int
    consensus_residual: float
    objective: float  # weighted sum of the per-agent conjugate values
    agent_objectives: tuple


@dataclass(frozen=True)
class BarycenterResult:
    barycenters: tuple
    trace: tuple
    lipschitz: float


def barycenter_solve(
    prob: BarycenterProblem,
    rule: CoordinateRule,
    num_rounds: int,
    seed: int = 0,
    on_round=None,
) -> BarycenterResult:
    """Run N synchronous rounds of the decentralized barycenter solver.

    Per round and agent: mix the dual vector from the accumulator and the
    running dual average, compute the conjugate gradient, share it with the
    graph neighbors, pick one coordinate (per-agent uniform draw or greedy
    argmax of the own gradient), apply the Laplacian-weighted gradient step
    to that coordinate of the accumulator, then refresh the running dual and
    primal averages.  Returns the per-agent primal averages and a trace of
    (round, consensus residual, objective).  ``on_round`` (if given) receives
    a snapshot dict after every round.
    """
    if num_rounds < 1:
        raise ValueError("num_rounds must be at least 1")
    m, n = prob.m, prob.n
    L = prob.lipschitz_bound if prob.lipschitz_bound is not None else default_lipschitz(prob)
    if not L > 0:
        raise ValueError(f"Lipschitz bound must be positive, got {L}")
    smoothed = [smooth_measure(h, prob.epsilon) for h in prob.measures]
    gammas = [prob.gamma(k) for k in range(prob.m)]
    graph = prob.graph

    xi = np.zeros((m, n))
    dual_avg = np.zeros((m, n))
    q_avg = np.zeros((m, n))
    A = 0.0
    trace = []

    for t in range(num_rounds):
        alpha, A_next = advance_alpha(A, L)
        lam = (alpha * xi + A * dual_avg) / A_next

        grads = [
            softmax_transport_gradient(lam[k], prob.costs[k].entries, smoothed[k].weights, gammas[k])
            for k in range(m)
        ]
        mailbox = GradientMailbox(graph)
        for k in range(m):
            mailbox.post(k, grads[k])

        for k in range(m):
            if rule is CoordinateRule.GREEDY:
                s = int(np.argmax(np.abs(grads[k])))
            else:
                s = int(substream(seed, TAG_BARYCENTER, t, k).integers(0, n))
            mixed = graph.degree(k) * grads[k]
            for j in graph.neighbors(k):
                mixed -= mailbox.fetch(k, j)
            xi[k, s] -= alpha * mixed[s]
            dual_avg[k] = (alpha * xi[k] + A * dual_avg[k]) / A_next
            q_avg[k] = (alpha * grads[k] + A * q_avg[k]) / A_next

        if on_round is not None:
            on_round(
                {
                    "t": t,
                    "alpha": alpha,
                    "A_prev": A,
                    "A": A_next,
                    "lam": lam.copy(),
                    "xi": xi.copy(),
                    "dual_avg": dual_avg.copy(),
                    "q_avg": q_avg.copy(),
                }
            )
        A = A_next
        objectives = tuple(
            conjugate_value(lam[k], prob.costs[k].entries, smoothed[k].weights, gammas[k])
            for k in range(m)
        )
        trace.append(
            BarycenterTraceRow(
                t=t + 1,
                consensus_residual=consensus_residual(list(q_avg), graph),
                objective=float(np.dot(prob.weights, objectives)),
                agent_objectives=objectives,
            )
        )

    barycenters = tuple(Histogram(q_avg[k] / q_avg[k].sum()) for k in range(m))
    return BarycenterResult(barycenters=barycenters, trace=tuple(trace), lipschitz=float(L))
