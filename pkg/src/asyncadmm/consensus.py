"""Edge-based consensus over an undirected graph.

Each node i holds a local convex term and a local copy x_i; every edge
(i, j) contributes one constraint row per endpoint and coordinate,
``A_ei x_i = z_ei`` with A entries +1 (low endpoint) and -1 (high
endpoint), and the z set forces ``z_ei + z_ej = 0``. Activating one edge
per iteration updates only the two endpoint copies, the edge's z pair,
and the edge's dual pair, which is the decentralized gossip-style
execution of the asynchronous engine.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (DisconnectedGraph, InvalidProblem, ParseError,
                     UnsupportedMix)
from .engine import _ops
from .problem import (ConstraintSystem, PrimalDualState, SeparableProblem,
                      initial_state)
from .scheduler import ProperPartition, build_partition
from .terms import AbsDev, Custom, L1, Quadratic, SumZeroPairs


@dataclass(eq=False)
class Graph:
    """Connected undirected graph given as an edge list with i < j."""

    num_nodes: int
    edges: tuple

    def __post_init__(self):
        if self.num_nodes < 1:
            raise InvalidProblem("graph needs at least one node")
        norm = []
        seen = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise InvalidProblem(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise InvalidProblem(f"edge ({i},{j}) out of range")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise InvalidProblem(f"duplicate edge {e}")
            seen.add(e)
            norm.append(e)
        self.edges = tuple(norm)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def is_connected(self) -> bool:
        if self.num_nodes == 1:
            return True
        adj = [[] for _ in range(self.num_nodes)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.num_nodes

    @classmethod
    def cycle(cls, num_nodes: int) -> "Graph":
        edges = [(i, (i + 1) % num_nodes) for i in range(num_nodes)]
        if num_nodes == 2:
            edges = [(0, 1)]
        return cls(num_nodes, tuple(edges))

    @classmethod
    def path(cls, num_nodes: int) -> "Graph":
        return cls(num_nodes, tuple((i, i + 1) for i in range(num_nodes - 1)))

    @classmethod
    def star(cls, num_nodes: int) -> "Graph":
        return cls(num_nodes, tuple((0, i) for i in range(1, num_nodes)))

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        """Parse the plain graph format: first line "N M", then M lines "i j"."""
        lines = [ln for ln in (s.strip() for s in text.splitlines())
                 if ln and not ln.startswith("#")]
        if not lines:
            raise ParseError("empty graph file")
        head = lines[0].split()
        if len(head) != 2:
            raise ParseError(f"expected 'N M' header, got {lines[0]!r}")
        try:
            num_nodes, m = int(head[0]), int(head[1])
        except ValueError:
            raise ParseError(f"non-integer header {lines[0]!r}") from None
        if len(lines) - 1 != m:
            raise ParseError(f"header declares {m} edges, found {len(lines) - 1}")
        edges = []
        for ln in lines[1:]:
            parts = ln.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'i j', got {ln!r}")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ParseError(f"non-integer edge {ln!r}") from None
        try:
            return cls(num_nodes, tuple(edges))
        except InvalidProblem as exc:
            raise ParseError(str(exc)) from None

    def to_text(self) -> str:
        lines = [f"{self.num_nodes} {self.num_edges}"]
        lines += [f"{i} {j}" for i, j in self.edges]
        return "\n".join(lines) + "\n"


@dataclass(eq=False)
class EdgeReformulation:
    """Separable problem, per-edge partition, and row bookkeeping for a graph."""

    graph: Graph
    problem: SeparableProblem
    partition: ProperPartition
    signs: np.ndarray       # (M, 2): incidence sign of (low, high) endpoint
    n: int

    def edge_rows(self, e: int, endpoint: int) -> np.ndarray:
        """Constraint rows of edge ``e`` owned by ``endpoint`` (0=low, 1=high)."""
        start = (2 * e + endpoint) * self.n
        return np.arange(start, start + self.n, dtype=np.intp)


def build_reformulation(graph: Graph, terms, x_sets, beta: float,
                        flip_edges: Sequence[int] = ()) -> EdgeReformulation:
    """Edge-based constraint system for consensus over ``graph``.

    Produces W = 2 M n rows: for edge e = (i, j), endpoint i's rows carry
    coefficient +1 and endpoint j's -1 (flipped for edges listed in
    ``flip_edges``; the orientation does not affect the x trajectory),
    H = -I, a sum-zero pair per edge and coordinate, and one partition
    block per edge.
    """
    if not graph.is_connected():
        raise DisconnectedGraph(
            f"graph with {graph.num_nodes} nodes and {graph.num_edges} edges "
            "is not connected")
    terms = tuple(terms)
    x_sets = tuple(x_sets)
    if len(terms) != graph.num_nodes:
        raise InvalidProblem(f"need {graph.num_nodes} terms, got {len(terms)}")
    n = terms[0].dim
    m = graph.num_edges
    w = 2 * m * n
    flip = set(int(e) for e in flip_edges)
    entries = []
    pairs = []
    signs = np.empty((m, 2))
    for e, (i, j) in enumerate(graph.edges):
        s = -1.0 if e in flip else 1.0
        signs[e] = (s, -s)
        for t in range(n):
            row_i = (2 * e) * n + t
            row_j = (2 * e + 1) * n + t
            entries.append((row_i, i, t, s))
            entries.append((row_j, j, t, -s))
            pairs.append((row_i, row_j))
    cs = ConstraintSystem(n=n, N=graph.num_nodes, W=w, entries=tuple(entries),
                          h_diag=-np.ones(w))
    z_set = SumZeroPairs(dim=w, pairs=tuple(pairs))
    problem = SeparableProblem(terms=terms, x_sets=x_sets, z_set=z_set,
                               constraints=cs, beta=beta)
    blocks = [np.arange(2 * e * n, 2 * (e + 1) * n, dtype=np.intp)
              for e in range(m)]
    partition = build_partition(z_set, cs, blocks)
    return EdgeReformulation(graph=graph, problem=problem, partition=partition,
                             signs=signs, n=n)


def edge_initial_state(reform: EdgeReformulation,
                       x0: Optional[np.ndarray] = None) -> PrimalDualState:
    """Start with z as the per-edge sum-zero projection of the coupled x."""
    prob = reform.problem
    cs = prob.constraints
    state = initial_state(prob, x0)
    z_raw = cs.row_coeff * state.x[cs.col_index]
    state.z = prob.z_set.project(z_raw)
    return state


def edge_step(reform: EdgeReformulation, state: PrimalDualState,
              edge: int) -> PrimalDualState:
    """Closed-form activation of one edge.

    Both endpoint copies re-solve their local subproblems (against all
    of their incident constraint rows, so the step agrees with the
    generic engine on per-edge blocks), then the edge's multiplier,
    auxiliary pair, and dual pair follow in closed form:

        v    = (-p_ei - p_ej)/2 + (beta/2)(A_ei x_i + A_ej x_j)
        z_eq = (-p_eq - v)/beta + A_eq x_q
        p_eq = -v

    which keeps z_ei + z_ej = 0 and makes both dual entries equal.
    """
    prob = reform.problem
    ops = _ops(prob)
    m = reform.graph.num_edges
    if not 0 <= edge < m:
        raise InvalidProblem(f"edge index {edge} out of range [0,{m})")
    i, j = reform.graph.edges[edge]
    n = reform.n
    beta = prob.beta

    x = state.x.copy()
    x[i * n:(i + 1) * n] = ops.solve_component(i, state.p, state.z)
    x[j * n:(j + 1) * n] = ops.solve_component(j, state.p, state.z)

    rows_i = reform.edge_rows(edge, 0)
    rows_j = reform.edge_rows(edge, 1)
    a_i, a_j = reform.signs[edge]
    ax_i = a_i * x[i * n:(i + 1) * n]
    ax_j = a_j * x[j * n:(j + 1) * n]
    p_i = state.p[rows_i]
    p_j = state.p[rows_j]

    v = 0.5 * (-p_i - p_j) + 0.5 * beta * (ax_i + ax_j)
    z = state.z.copy()
    z[rows_i] = (-p_i - v) / beta + ax_i
    z[rows_j] = (-p_j - v) / beta + ax_j
    p = state.p.copy()
    p[rows_i] = -v
    p[rows_j] = -v
    return PrimalDualState(x=x, z=z, p=p, k=state.k + 1)


def consensus_reference(terms) -> np.ndarray:
    """Centralized optimum of ``min_c sum_i f_i(c)``.

    Weighted mean for quadratic terms, coordinatewise median for absolute
    deviations; other combinations of quadratic, absolute-deviation, and
    one-norm terms are solved by bisection on the summed subgradient.
    """
    terms = tuple(terms)
    if not terms:
        raise UnsupportedMix("no terms")
    n = terms[0].dim
    if any(t.dim != n for t in terms):
        raise UnsupportedMix("terms have mixed dimensions")
    if all(isinstance(t, Quadratic) for t in terms):
        wsum = sum(t.weight for t in terms)
        return sum(t.weight * t.center for t in terms) / wsum
    if all(isinstance(t, AbsDev) for t in terms):
        centers = np.stack([t.center for t in terms])
        return np.median(centers, axis=0)
    if any(isinstance(t, Custom) for t in terms):
        raise UnsupportedMix("custom terms have no closed-form reference")
    return np.array([_bisect_total_subgradient(terms, t) for t in range(n)])


def _bisect_total_subgradient(terms, coord: int) -> float:
    """Scalar minimizer of the summed terms along one coordinate."""
    def right_derivative(c):
        g = 0.0
        for t in terms:
            if isinstance(t, Quadratic):
                g += 2.0 * t.weight * (c - t.center[coord])
            elif isinstance(t, AbsDev):
                g += 1.0 if c >= t.center[coord] else -1.0
            elif isinstance(t, L1):
                g += t.gamma if c >= 0 else -t.gamma
        return g

    lo, hi = -1.0, 1.0
    while right_derivative(lo) >= 0 and lo > -1e12:
        lo *= 2.0
    while right_derivative(hi) < 0 and hi < 1e12:
        hi *= 2.0
    if right_derivative(lo) >= 0:
        return lo  # nondecreasing from the far left: kink at the boundary
    for _ in range(200):
        if hi - lo <= 1e-12 * max(1.0, abs(lo), abs(hi)):
            break
        mid = 0.5 * (lo + hi)
        if right_derivative(mid) < 0:
            lo = mid
        else:
            hi = mid
    return hi


def consensus_gap(reform: EdgeReformulation, state: PrimalDualState,
                  reference: np.ndarray) -> float:
    """``max_i || x_i - reference ||_inf`` over the node copies."""
    n = reform.n
    gaps = [np.max(np.abs(state.x[i * n:(i + 1) * n] - reference))
            for i in range(reform.graph.num_nodes)]
    return float(max(gaps))
