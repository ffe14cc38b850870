"""Problem containers: coupling constraints, separable problems, iterates.

The coupling constraint is ``D x + H z = 0`` where each row of ``D`` has a
single nonzero entry (so every constraint row involves exactly one
component of ``x``) and ``H`` is diagonal and invertible. ``D`` is stored
row-sparse as one (row, block, coord, coeff) entry per row; this makes the
one-entry-per-row structure a property of the storage rather than a
numerical check, while :func:`validate_constraints` still reports
violations for raw entry lists that break the contract.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, InvalidProblem
from .terms import FeasibleSet, SumZeroPairs, term_value


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of a structural constraint check. Violations are data."""

    violations: tuple

    @property
    def ok(self) -> bool:
        return not self.violations

    def __str__(self):
        if self.ok:
            return "constraints valid"
        return "; ".join(self.violations)


@dataclass(eq=False)
class ConstraintSystem:
    """Row-sparse ``D`` (W x nN) plus diagonal ``H`` (W x W).

    Parameters
    ----------
    n, N, W : int
        Component dimension, number of components, number of rows.
    entries : sequence
        One ``(row, block, coeff)`` or ``(row, block, coord, coeff)``
        tuple per nonzero of ``D``. ``coord`` defaults to 0 and indexes
        within the owning block (only relevant for ``n > 1``).
    h_diag : vector of length W
        Diagonal of ``H``.
    """

    n: int
    N: int
    W: int
    entries: tuple
    h_diag: np.ndarray
    # filled by _freeze() once the system validates cleanly
    row_block: np.ndarray = field(default=None, repr=False)
    row_coord: np.ndarray = field(default=None, repr=False)
    row_coeff: np.ndarray = field(default=None, repr=False)
    col_index: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if min(self.n, self.N, self.W) < 1:
            raise InvalidProblem("dimensions n, N, W must be positive")
        norm = []
        for entry in self.entries:
            if len(entry) == 3:
                row, block, coeff = entry
                coord = 0
            elif len(entry) == 4:
                row, block, coord, coeff = entry
            else:
                raise InvalidProblem(f"bad D entry {entry!r}")
            row, block, coord = int(row), int(block), int(coord)
            if not 0 <= row < self.W:
                raise InvalidProblem(f"row index {row} out of range [0,{self.W})")
            if not 0 <= block < self.N:
                raise InvalidProblem(f"block index {block} out of range [0,{self.N})")
            if not 0 <= coord < self.n:
                raise InvalidProblem(f"coord index {coord} out of range [0,{self.n})")
            norm.append((row, block, coord, float(coeff)))
        self.entries = tuple(norm)
        self.h_diag = np.asarray(self.h_diag, dtype=float)
        if self.h_diag.shape != (self.W,):
            raise InvalidProblem(f"H diagonal must have length {self.W}")
        self._freeze()

    def _freeze(self):
        """Build per-row arrays if the system satisfies the row contract."""
        if not validate_constraints(self).ok:
            return
        row_block = np.empty(self.W, dtype=np.intp)
        row_coord = np.empty(self.W, dtype=np.intp)
        row_coeff = np.empty(self.W, dtype=float)
        for row, block, coord, coeff in self.entries:
            row_block[row] = block
            row_coord[row] = coord
            row_coeff[row] = coeff
        self.row_block = row_block
        self.row_coord = row_coord
        self.row_coeff = row_coeff
        self.col_index = row_block * self.n + row_coord

    @property
    def is_valid(self) -> bool:
        return self.row_block is not None

    def require_valid(self):
        if not self.is_valid:
            raise InvalidProblem(str(validate_constraints(self)))

    def rows_of_component(self, i: int) -> np.ndarray:
        self.require_valid()
        return np.flatnonzero(self.row_block == i)

    def dense_d(self) -> np.ndarray:
        """Materialize ``D`` as a dense array (for desk-scale checks)."""
        self.require_valid()
        d = np.zeros((self.W, self.n * self.N))
        d[np.arange(self.W), self.col_index] = self.row_coeff
        return d


def validate_constraints(cs: ConstraintSystem) -> ValidationReport:
    """Check the decoupled-constraint structure of ``D`` and ``H``.

    Reports (never raises): rows of ``D`` carrying more than one entry or
    none at all, zero coefficients, component blocks never referenced,
    and zero diagonal entries of ``H``.
    """
    violations = []
    per_row: dict = {}
    for row, block, coord, coeff in cs.entries:
        per_row.setdefault(row, []).append((block, coord, coeff))
    for row in range(cs.W):
        hits = per_row.get(row, [])
        if not hits:
            violations.append(f"row {row} of D has no entry")
        elif len(hits) > 1:
            blocks = sorted({b for b, _, _ in hits})
            if len(blocks) > 1:
                violations.append(f"row {row} couples two components {blocks}")
            else:
                violations.append(f"row {row} has {len(hits)} entries")
        elif hits[0][2] == 0.0:
            violations.append(f"row {row} has zero coefficient")
    covered = {b for _, b, _, c in cs.entries if c != 0.0}
    for b in range(cs.N):
        if b not in covered:
            violations.append(f"component {b} has zero column-block in D")
    for l in range(cs.W):
        if cs.h_diag[l] == 0.0:
            violations.append(f"H not invertible: zero diagonal at row {l}")
    return ValidationReport(tuple(violations))


@dataclass(eq=False)
class SeparableProblem:
    """``min sum_i f_i(x_i) s.t. x_i in X_i, z in Z, D x + H z = 0``."""

    terms: tuple
    x_sets: tuple
    z_set: FeasibleSet
    constraints: ConstraintSystem
    beta: float

    def __post_init__(self):
        self.terms = tuple(self.terms)
        self.x_sets = tuple(self.x_sets)
        cs = self.constraints
        if len(self.terms) != cs.N:
            raise InvalidProblem(f"expected {cs.N} terms, got {len(self.terms)}")
        if len(self.x_sets) != cs.N:
            raise InvalidProblem(f"expected {cs.N} x_sets, got {len(self.x_sets)}")
        for i, (t, s) in enumerate(zip(self.terms, self.x_sets)):
            if t.dim != cs.n:
                raise InvalidProblem(f"term {i} has dim {t.dim}, expected {cs.n}")
            if s.dim != cs.n:
                raise InvalidProblem(f"x_set {i} has dim {s.dim}, expected {cs.n}")
        if self.z_set.dim != cs.W:
            raise InvalidProblem(f"z_set has dim {self.z_set.dim}, expected {cs.W}")
        if not self.beta > 0:
            raise InvalidProblem("beta must be positive")
        cs.require_valid()

    @property
    def num_components(self) -> int:
        return self.constraints.N

    @property
    def dim_x(self) -> int:
        return self.constraints.n * self.constraints.N

    @property
    def dim_z(self) -> int:
        return self.constraints.W

    def component(self, x: np.ndarray, i: int) -> np.ndarray:
        n = self.constraints.n
        return x[i * n:(i + 1) * n]


@dataclass
class PrimalDualState:
    """Iterate triple ``(x, z, p)`` with the iteration counter."""

    x: np.ndarray
    z: np.ndarray
    p: np.ndarray
    k: int = 0

    def copy(self) -> "PrimalDualState":
        return PrimalDualState(self.x.copy(), self.z.copy(), self.p.copy(), self.k)


def initial_state(prob: SeparableProblem,
                  x0: Optional[np.ndarray] = None,
                  z0: Optional[np.ndarray] = None) -> PrimalDualState:
    """Feasible starting point with ``p = 0``.

    Defaults project the origin onto the feasible sets; explicit starts
    are projected as well so the state invariants hold from step zero.
    """
    cs = prob.constraints
    if x0 is None:
        x0 = np.zeros(prob.dim_x)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (prob.dim_x,):
        raise DimensionMismatch(f"x0 must have shape ({prob.dim_x},)")
    x = np.concatenate([
        prob.x_sets[i].project(prob.component(x0, i)) for i in range(cs.N)
    ])
    if z0 is None:
        z0 = np.zeros(cs.W)
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (cs.W,):
        raise DimensionMismatch(f"z0 must have shape ({cs.W},)")
    z = prob.z_set.project(z0)
    return PrimalDualState(x=x, z=z, p=np.zeros(cs.W), k=0)


def objective(prob: SeparableProblem, x: np.ndarray) -> float:
    """Global objective ``F(x) = sum_i f_i(x_i)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (prob.dim_x,):
        raise DimensionMismatch(f"x must have shape ({prob.dim_x},)")
    return sum(term_value(t, prob.component(x, i)) for i, t in enumerate(prob.terms))


def residual(prob: SeparableProblem, x: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Constraint residual ``D x + H z``, zero exactly at feasible points."""
    cs = prob.constraints
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    if x.shape != (prob.dim_x,) or z.shape != (cs.W,):
        raise DimensionMismatch("residual: x or z has wrong shape")
    return cs.row_coeff * x[cs.col_index] + cs.h_diag * z


def lagrangian(prob: SeparableProblem, x: np.ndarray, z: np.ndarray,
               p: np.ndarray) -> float:
    """``F(x) - p'(D x + H z)``."""
    p = np.asarray(p, dtype=float)
    if p.shape != (prob.dim_z,):
        raise DimensionMismatch(f"p must have shape ({prob.dim_z},)")
    return objective(prob, x) - float(np.dot(p, residual(prob, x, z)))


@dataclass(eq=False)
class StandardProblem:
    """Two-block problem ``min F(x) + G(z) s.t. D x + H z = c``.

    ``G`` is optional and coordinate-separable (one scalar term per z
    coordinate); when the z set couples coordinates in pairs, ``G`` must
    be absent so the coupled block stays a closed-form projection.
    """

    x_terms: tuple
    x_sets: tuple
    z_terms: Optional[tuple]
    z_set: FeasibleSet
    constraints: ConstraintSystem
    c: np.ndarray
    beta: float

    def __post_init__(self):
        cs = self.constraints
        cs.require_valid()
        self.x_terms = tuple(self.x_terms)
        self.x_sets = tuple(self.x_sets)
        self.c = np.asarray(self.c, dtype=float)
        if self.c.shape != (cs.W,):
            raise InvalidProblem(f"c must have length {cs.W}")
        if self.z_terms is not None:
            self.z_terms = tuple(self.z_terms)
            if len(self.z_terms) != cs.W:
                raise InvalidProblem("need one z term per row")
            if any(t.dim != 1 for t in self.z_terms):
                raise InvalidProblem("z terms must be scalar")
            if isinstance(self.z_set, SumZeroPairs) and self.z_set.pairs:
                raise InvalidProblem("z terms not supported with coupled z set")
        if not self.beta > 0:
            raise InvalidProblem("beta must be positive")

    @classmethod
    def from_separable(cls, prob: SeparableProblem) -> "StandardProblem":
        return cls(x_terms=prob.terms, x_sets=prob.x_sets, z_terms=None,
                   z_set=prob.z_set, constraints=prob.constraints,
                   c=np.zeros(prob.dim_z), beta=prob.beta)

    @property
    def dim_x(self) -> int:
        return self.constraints.n * self.constraints.N

    @property
    def dim_z(self) -> int:
        return self.constraints.W
