"""Benchmark problem generators.

Three scalar consensus families over a graph: quadratic data fitting
(optimum is the weighted mean of the local targets), least absolute
deviation (optimum is the median), and a toy sparse-regression split
where one agent holds the one-norm penalty and the rest hold squared
prediction errors.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .consensus import (EdgeReformulation, Graph, build_reformulation,
                        consensus_reference)
from .diagnostics import ReferenceSolution
from .errors import InvalidProblem, UnknownBenchmark
from .terms import AbsDev, Box, L1, Quadratic

BENCHMARK_NAMES = ("consensus-quadratic", "consensus-lad", "lasso-toy")


@dataclass(eq=False)
class BenchmarkSpec:
    """Named benchmark plus its data parameters.

    ``a`` are the per-node targets for the consensus families;
    ``w``/``b``/``pi`` are the regression rows and penalty for lasso-toy.
    ``box_margin`` widens the compact box around the data range.
    """

    name: str
    a: Optional[list] = None
    w: Optional[list] = None
    b: Optional[list] = None
    pi: float = 1.0
    box_margin: Optional[float] = None

    def __post_init__(self):
        if self.name not in BENCHMARK_NAMES:
            raise UnknownBenchmark(
                f"unknown benchmark {self.name!r}; known: {BENCHMARK_NAMES}")


@dataclass(eq=False)
class Benchmark:
    """Generated problem with its centralized reference."""

    spec: BenchmarkSpec
    reform: EdgeReformulation
    reference: np.ndarray
    reference_solution: ReferenceSolution = field(default=None)

    @property
    def problem(self):
        return self.reform.problem


def _data_box(values, margin):
    lo, hi = float(np.min(values)), float(np.max(values))
    if margin is None:
        margin = (hi - lo) + 1.0
    return Box(np.array([lo - margin]), np.array([hi + margin]))


def generate_benchmark(spec: BenchmarkSpec, graph: Graph,
                       beta: float = 1.0) -> Benchmark:
    """Build the edge reformulation of a named benchmark over ``graph``."""
    n_nodes = graph.num_nodes
    if spec.name in ("consensus-quadratic", "consensus-lad"):
        a = spec.a if spec.a is not None else [float(i + 1) for i in range(n_nodes)]
        a = np.asarray(a, dtype=float)
        if a.shape != (n_nodes,):
            raise InvalidProblem(f"need {n_nodes} data values, got {a.shape}")
        if spec.name == "consensus-quadratic":
            terms = tuple(Quadratic(np.array([ai]), 1.0) for ai in a)
        else:
            terms = tuple(AbsDev(np.array([ai])) for ai in a)
        box = _data_box(a, spec.box_margin)
    else:  # lasso-toy
        w = np.asarray(spec.w if spec.w is not None
                       else np.ones(n_nodes - 1), dtype=float)
        b = np.asarray(spec.b if spec.b is not None
                       else np.arange(1, n_nodes), dtype=float)
        if w.shape != (n_nodes - 1,) or b.shape != (n_nodes - 1,):
            raise InvalidProblem(
                f"lasso-toy on {n_nodes} nodes needs {n_nodes - 1} rows of (w, b)")
        if np.any(w == 0):
            raise InvalidProblem("lasso-toy regression weights must be nonzero")
        if spec.pi < 0:
            raise InvalidProblem("lasso-toy penalty must be nonnegative")
        # (w_i x - b_i)^2 = w_i^2 (x - b_i/w_i)^2, so each row is a quadratic
        terms = tuple(Quadratic(np.array([bi / wi]), wi * wi)
                      for wi, bi in zip(w, b))
        terms = terms + (L1(gamma=float(spec.pi), dim=1),)
        centers = np.append(b / w, 0.0)
        box = _data_box(centers, spec.box_margin)

    x_sets = tuple(box for _ in range(n_nodes))
    reform = build_reformulation(graph, terms, x_sets, beta)
    reference = consensus_reference(terms)
    cs = reform.problem.constraints
    x_star = np.tile(reference, n_nodes)
    z_star = -(cs.row_coeff * x_star[cs.col_index]) / cs.h_diag
    ref_sol = ReferenceSolution(x=x_star, z=z_star, p=None, source="analytic",
                                prob=reform.problem)
    return Benchmark(spec=spec, reform=reform, reference=reference,
                     reference_solution=ref_sol)
