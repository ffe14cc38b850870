"""Iteration engines.

Asynchronous engine: at each iteration one partition block fires; the
owning x components re-solve their local subproblems against the full
current (p, z), the active z rows re-fit against the refreshed coupling
values, and the active dual rows take a residual step of size beta. All
other coordinates are frozen.

Shadow pass: the full-information iterates (y, v, mu) that a
fully-activated step would have produced from the same state; the
asynchronous iterates agree with them on the active coordinates, which
the probes verify.

Synchronous engine: the classical two-block method (sequential x
minimization, z minimization, dual ascent with step beta) for problems
with an optional separable z objective and right-hand side c.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivergenceError, ImproperPartition, MissingReference
from .problem import (PrimalDualState, SeparableProblem, StandardProblem,
                      initial_state, objective, residual)
from .prox import (LocalSubproblem, ZBlockSubproblem, solve_local,
                   solve_local_prepared, solve_z_block, solve_z_prepared)
from .scheduler import (ActivationDistribution, ProperPartition, RngStream,
                        sample_block)
from .terms import Box, Free, SumZeroPairs

DIVERGENCE_LIMIT = 1e12


@dataclass(eq=False)
class ShadowIterates:
    """Full-information iterates computed from one state: r = D y + H v."""

    y: np.ndarray
    v: np.ndarray
    mu: np.ndarray
    r: np.ndarray


@dataclass(eq=False)
class StepRecord:
    """One asynchronous step: sampled block, states, optional shadow pass."""

    block: int
    before: PrimalDualState
    after: PrimalDualState
    shadow: Optional[ShadowIterates] = None


_INF = np.inf


class _CompiledOps:
    """Per-problem arrays for the update kernels (built once, read-only)."""

    def __init__(self, cs, terms, x_sets, beta):
        self.n, self.N, self.W = cs.n, cs.N, cs.W
        self.beta = beta
        self.terms = terms
        self.x_sets = x_sets
        self.h = cs.h_diag
        self.coeff = cs.row_coeff
        self.col = cs.col_index
        self.comp_rows = []
        self.comp_coords = []
        self.comp_coeffs = []
        self.comp_quad = []
        self.comp_lo = []
        self.comp_hi = []
        self.comp_h = []
        for i in range(cs.N):
            rows = np.flatnonzero(cs.row_block == i)
            coords = cs.row_coord[rows]
            coeffs = cs.row_coeff[rows]
            quad = beta * np.bincount(coords, weights=coeffs * coeffs,
                                      minlength=cs.n)
            self.comp_rows.append(rows)
            self.comp_coords.append(coords)
            self.comp_coeffs.append(coeffs)
            self.comp_quad.append(quad)
            self.comp_h.append(cs.h_diag[rows])
            fset = x_sets[i]
            if isinstance(fset, Box):
                self.comp_lo.append(fset.lower)
                self.comp_hi.append(fset.upper)
            else:
                self.comp_lo.append(np.full(cs.n, -_INF))
                self.comp_hi.append(np.full(cs.n, _INF))
        # pair structure of the z set over all rows, for shadow passes
        self.pair_i = np.empty(0, dtype=np.intp)
        self.pair_j = np.empty(0, dtype=np.intp)

    def set_pairs(self, z_set):
        if isinstance(z_set, SumZeroPairs) and z_set.pairs:
            self.pair_i = np.array([i for i, _ in z_set.pairs], dtype=np.intp)
            self.pair_j = np.array([j for _, j in z_set.pairs], dtype=np.intp)

    def solve_component(self, i, p, z, c=None):
        """Minimize f_i plus its scaled coupling terms at multiplier p.

        The tilt gathers every constraint row owned by the component:
        ``linear = D_i'(p - beta (H z - c))`` scattered onto the
        component's coordinates.
        """
        rows = self.comp_rows[i]
        shift = self.comp_h[i] * z[rows]
        if c is not None:
            shift = shift - c[rows]
        g = self.comp_coeffs[i] * (p[rows] - self.beta * shift)
        if self.n == 1:
            linear = g.sum(keepdims=True)
        else:
            linear = np.bincount(self.comp_coords[i], weights=g, minlength=self.n)
        return solve_local_prepared(self.terms[i], self.comp_quad[i], linear,
                                    self.comp_lo[i], self.comp_hi[i])


class _BlockOps:
    """Gathered constants of one partition block."""

    def __init__(self, ops, z_set, comps, rows):
        self.comps = [int(i) for i in comps]
        self.rows = rows
        self.w = ops.h[rows]
        self.coeff = ops.coeff[rows]
        self.col = ops.col[rows]
        if isinstance(z_set, SumZeroPairs) and z_set.pairs:
            pos = {int(r): a for a, r in enumerate(rows)}
            local = [(pos[i], pos[j]) for i, j in z_set.pairs if i in pos]
            self.pair_i = np.array([i for i, _ in local], dtype=np.intp)
            self.pair_j = np.array([j for _, j in local], dtype=np.intp)
        else:
            self.pair_i = np.empty(0, dtype=np.intp)
            self.pair_j = np.empty(0, dtype=np.intp)


def _ops(prob: SeparableProblem) -> _CompiledOps:
    ops = getattr(prob, "_engine_ops", None)
    if ops is None:
        cs = prob.constraints
        ops = _CompiledOps(cs, prob.terms, prob.x_sets, prob.beta)
        ops.set_pairs(prob.z_set)
        prob._engine_ops = ops
    return ops


def _block_ops(prob: SeparableProblem, partition: ProperPartition):
    cache = getattr(prob, "_block_ops", None)
    if cache is None:
        cache = {}
        prob._block_ops = cache
    entry = cache.get(id(partition))
    if entry is None:
        ops = _ops(prob)
        blocks = [_BlockOps(ops, prob.z_set, comps, rows)
                  for comps, rows in zip(partition.component_map,
                                         partition.blocks)]
        cache[id(partition)] = (partition, blocks)  # keep partition alive
        return blocks
    return entry[1]


def x_update(prob: SeparableProblem, state: PrimalDualState,
             active_components) -> np.ndarray:
    """Re-solve the local subproblems of the active components.

    Each active component i minimizes
    ``f_i(u) + (beta/2)||D_i u||^2 - (p - beta H z)' D_i u`` over its set,
    using all constraint rows it owns; inactive components are unchanged.
    """
    ops = _ops(prob)
    x = state.x.copy()
    n = ops.n
    for i in active_components:
        i = int(i)
        x[i * n:(i + 1) * n] = ops.solve_component(i, state.p, state.z)
    return x


def z_update(prob: SeparableProblem, state: PrimalDualState,
             x_new: np.ndarray, active_rows) -> np.ndarray:
    """Refit the active z rows against the refreshed coupling values.

    The active block minimizes
    ``(beta/2)||H_psi z||^2 - (p - beta D_phi x+)' H_psi z`` over the z
    set restricted to the block; inactive rows are unchanged.
    """
    ops = _ops(prob)
    rows = np.asarray(active_rows, dtype=np.intp)
    z = state.z.copy()
    if rows.size == 0:
        return z
    t = state.p[rows] / ops.beta - ops.coeff[rows] * x_new[ops.col[rows]]
    sub = ZBlockSubproblem(weights=ops.h[rows], target=t,
                           set=_restrict_z_set(prob.z_set, rows))
    z[rows] = solve_z_block(sub)
    return z


def _restrict_z_set(z_set, rows):
    if isinstance(z_set, SumZeroPairs) and z_set.pairs:
        pos = {int(r): a for a, r in enumerate(rows)}
        local = []
        for i, j in z_set.pairs:
            ii, jj = pos.get(i), pos.get(j)
            if (ii is None) != (jj is None):
                raise ImproperPartition(
                    f"active rows split the coupled pair ({i},{j})")
            if ii is not None:
                local.append((ii, jj))
        return SumZeroPairs(dim=rows.size, pairs=tuple(local))
    return Free(dim=rows.size)


def dual_update(prob: SeparableProblem, state: PrimalDualState,
                x_new: np.ndarray, z_new: np.ndarray, active_rows) -> np.ndarray:
    """Residual step ``p <- p - beta (D_phi x+ + H_psi z+)`` on active rows."""
    ops = _ops(prob)
    rows = np.asarray(active_rows, dtype=np.intp)
    p = state.p.copy()
    if rows.size == 0:
        return p
    r_active = ops.coeff[rows] * x_new[ops.col[rows]] + ops.h[rows] * z_new[rows]
    p[rows] -= ops.beta * r_active
    return p


def shadow_step(prob: SeparableProblem, state: PrimalDualState) -> ShadowIterates:
    """Full-information iterates (y, v, mu) from the given state."""
    ops = _ops(prob)
    n = ops.n
    y = np.empty_like(state.x)
    for i in range(ops.N):
        y[i * n:(i + 1) * n] = ops.solve_component(i, state.p, state.z)
    t = state.p / ops.beta - ops.coeff * y[ops.col]
    v = solve_z_prepared(ops.h, t, ops.pair_i, ops.pair_j)
    r = ops.coeff * y[ops.col] + ops.h * v
    mu = state.p - ops.beta * r
    return ShadowIterates(y=y, v=v, mu=mu, r=r)


def step(prob: SeparableProblem, state: PrimalDualState,
         partition: ProperPartition, dist: ActivationDistribution,
         rng: RngStream, with_shadow: bool = False) -> StepRecord:
    """One asynchronous iteration: sample a block, update x, z, p in order."""
    b = sample_block(dist, rng)
    shadow = shadow_step(prob, state) if with_shadow else None
    ops = _ops(prob)
    bo = _block_ops(prob, partition)[b]
    n = ops.n
    x = state.x.copy()
    for i in bo.comps:
        x[i * n:(i + 1) * n] = ops.solve_component(i, state.p, state.z)
    rows = bo.rows
    t = state.p[rows] / ops.beta - bo.coeff * x[bo.col]
    z_rows = solve_z_prepared(bo.w, t, bo.pair_i, bo.pair_j)
    z = state.z.copy()
    z[rows] = z_rows
    p = state.p.copy()
    p[rows] -= ops.beta * (bo.coeff * x[bo.col] + bo.w * z_rows)
    after = PrimalDualState(x=x, z=z, p=p, k=state.k + 1)
    return StepRecord(block=b, before=state, after=after, shadow=shadow)


def sync_admm_step(std_prob: StandardProblem,
                   state: PrimalDualState) -> PrimalDualState:
    """One synchronous two-block iteration (x, then z, then dual ascent)."""
    ops = getattr(std_prob, "_engine_ops", None)
    if ops is None:
        cs = std_prob.constraints
        ops = _CompiledOps(cs, std_prob.x_terms, std_prob.x_sets, std_prob.beta)
        ops.set_pairs(std_prob.z_set)
        std_prob._engine_ops = ops
    c = std_prob.c
    n = ops.n
    x = np.empty_like(state.x)
    for i in range(ops.N):
        x[i * n:(i + 1) * n] = ops.solve_component(i, state.p, state.z, c=c)
    q = state.p - ops.beta * (ops.coeff * x[ops.col] - c)
    if std_prob.z_terms is None:
        z = solve_z_prepared(ops.h, q / ops.beta, ops.pair_i, ops.pair_j)
    else:
        z = np.empty(ops.W)
        for l in range(ops.W):
            if isinstance(std_prob.z_set, Box):
                coord_set = Box(std_prob.z_set.lower[l:l + 1],
                                std_prob.z_set.upper[l:l + 1])
            else:
                coord_set = Free(1)
            sub = LocalSubproblem(term=std_prob.z_terms[l],
                                  quad_diag=np.array([ops.beta * ops.h[l] ** 2]),
                                  linear=np.array([q[l] * ops.h[l]]),
                                  set=coord_set)
            z[l] = solve_local(sub)[0]
    p = state.p - ops.beta * (ops.coeff * x[ops.col] + ops.h * z - c)
    return PrimalDualState(x=x, z=z, p=p, k=state.k + 1)


@dataclass
class Probes:
    """Which optional quantities a run records."""

    shadow: bool = False
    lyapunov: bool = False
    ergodic: bool = True


@dataclass(eq=False)
class RunMetrics:
    """Per-iteration trajectory summary of one seeded run."""

    seed: int
    iters: np.ndarray
    objective: np.ndarray
    objective_error: np.ndarray
    feasibility: np.ndarray
    ergodic_objective_error: np.ndarray
    ergodic_feasibility: np.ndarray
    lyapunov: np.ndarray
    active_block: np.ndarray
    final_state: PrimalDualState
    x_bar: np.ndarray
    z_bar: np.ndarray
    counters: dict = field(default_factory=dict)
    x_max_abs: float = 0.0
    z_max_abs: float = 0.0

    COLUMNS = ("iter", "objective", "objective_error", "feasibility_violation",
               "ergodic_objective_error", "ergodic_feasibility", "lyapunov",
               "active_block")

    def rows(self):
        for j in range(self.iters.size):
            yield (int(self.iters[j]), self.objective[j],
                   self.objective_error[j], self.feasibility[j],
                   self.ergodic_objective_error[j], self.ergodic_feasibility[j],
                   self.lyapunov[j], int(self.active_block[j]))


def run(prob: SeparableProblem, partition: ProperPartition,
        dist: ActivationDistribution, seed: int, T: int,
        probes: Optional[Probes] = None, ref=None,
        x0=None, z0=None, stride: int = 1) -> RunMetrics:
    """Execute T asynchronous steps and record metrics every ``stride`` iters.

    ``ref`` (a diagnostics reference solution) enables objective-error and
    Lyapunov columns; without it those columns are NaN. Aborts with
    :class:`DivergenceError` when iterates exceed the divergence guard.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if probes is None:
        probes = Probes()
    if probes.lyapunov and (ref is None or ref.p is None):
        raise MissingReference("lyapunov probe requires a dual reference")

    ops = _ops(prob)
    state = initial_state(prob, x0, z0)
    x_sum = np.zeros_like(state.x)
    z_sum = np.zeros_like(state.z)
    f_star = objective(prob, ref.x) if ref is not None else np.nan
    wd = dist.weight_diag
    inv_2b = 1.0 / (2.0 * prob.beta)
    half_b = 0.5 * prob.beta

    rec_iter, rec_obj, rec_objerr, rec_feas = [], [], [], []
    rec_eobj, rec_efeas, rec_lyap, rec_block = [], [], [], []
    counters = {"steps": T, "shadow_checks": 0, "shadow_failures": 0,
                "freeze_checks": 0, "freeze_failures": 0}
    x_max = float(np.max(np.abs(state.x), initial=0.0))
    z_max = float(np.max(np.abs(state.z), initial=0.0))
    p_max = 0.0

    start_max = max(x_max, z_max)
    if not (start_max <= DIVERGENCE_LIMIT):
        raise DivergenceError(f"initial state magnitude {start_max:.3e} "
                              "exceeds the divergence guard")

    rng = RngStream(seed)
    for k in range(1, T + 1):
        rec = step(prob, state, partition, dist, rng,
                   with_shadow=probes.shadow)
        if probes.shadow:
            _tally_shadow(prob, partition, rec, counters)
        state = rec.after
        # only the active coordinates moved, so guarding them guards all
        rows = partition.blocks[rec.block]
        z_hot = float(np.max(np.abs(state.z[rows])))
        p_hot = float(np.max(np.abs(state.p[rows])))
        x_hot = 0.0
        n = ops.n
        for i in partition.component_map[rec.block]:
            x_hot = max(x_hot, float(np.max(np.abs(state.x[i * n:(i + 1) * n]))))
        x_max = max(x_max, x_hot)
        z_max = max(z_max, z_hot)
        p_max = max(p_max, p_hot)
        hot = max(x_hot, z_hot, p_hot)
        if not (hot <= DIVERGENCE_LIMIT):  # catches NaN as well
            raise DivergenceError(
                f"iterate magnitude {hot:.3e} exceeded guard at iteration {k} "
                f"(seed {seed}, block {rec.block})")
        x_sum += state.x
        z_sum += state.z
        if k % stride == 0 or k == T:
            rec_iter.append(k)
            rec_obj.append(objective(prob, state.x))
            rec_objerr.append(abs(rec_obj[-1] - f_star))
            rec_feas.append(float(np.linalg.norm(residual(prob, state.x, state.z))))
            if probes.ergodic:
                xb = x_sum / k
                zb = z_sum / k
                rec_eobj.append(abs(objective(prob, xb) - f_star))
                rec_efeas.append(float(np.linalg.norm(residual(prob, xb, zb))))
            else:
                rec_eobj.append(np.nan)
                rec_efeas.append(np.nan)
            if probes.lyapunov:
                dp = state.p - ref.p
                hz = ops.h * (state.z - ref.z)
                rec_lyap.append(inv_2b * float(np.dot(dp * wd, dp))
                                + half_b * float(np.dot(hz * wd, hz)))
            else:
                rec_lyap.append(np.nan)
            rec_block.append(rec.block)

    return RunMetrics(
        seed=seed, iters=np.array(rec_iter, dtype=np.intp),
        objective=np.array(rec_obj), objective_error=np.array(rec_objerr),
        feasibility=np.array(rec_feas),
        ergodic_objective_error=np.array(rec_eobj),
        ergodic_feasibility=np.array(rec_efeas),
        lyapunov=np.array(rec_lyap),
        active_block=np.array(rec_block, dtype=np.intp),
        final_state=state, x_bar=x_sum / T, z_bar=z_sum / T,
        counters=counters, x_max_abs=x_max, z_max_abs=z_max)


SHADOW_TOL = 1e-9


def _tally_shadow(prob, partition, rec: StepRecord, counters: dict):
    """Check active-coordinate agreement with the shadow pass and freezes."""
    n = prob.constraints.n
    comps = partition.component_map[rec.block]
    rows = partition.blocks[rec.block]
    sh = rec.shadow
    ok = True
    for i in comps:
        sl = slice(i * n, (i + 1) * n)
        if np.max(np.abs(rec.after.x[sl] - sh.y[sl])) > SHADOW_TOL:
            ok = False
    if np.max(np.abs(rec.after.z[rows] - sh.v[rows]), initial=0.0) > SHADOW_TOL:
        ok = False
    if np.max(np.abs(rec.after.p[rows] - sh.mu[rows]), initial=0.0) > SHADOW_TOL:
        ok = False
    counters["shadow_checks"] += 1
    if not ok:
        counters["shadow_failures"] += 1

    frozen = True
    comp_mask = np.zeros(prob.dim_x, dtype=bool)
    for i in comps:
        comp_mask[i * n:(i + 1) * n] = True
    row_mask = np.zeros(prob.dim_z, dtype=bool)
    row_mask[rows] = True
    if not np.array_equal(rec.after.x[~comp_mask], rec.before.x[~comp_mask]):
        frozen = False
    if not np.array_equal(rec.after.z[~row_mask], rec.before.z[~row_mask]):
        frozen = False
    if not np.array_equal(rec.after.p[~row_mask], rec.before.p[~row_mask]):
        frozen = False
    counters["freeze_checks"] += 1
    if not frozen:
        counters["freeze_failures"] += 1
