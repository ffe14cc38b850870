"""Random activation of constraint blocks.

A run activates one block of constraint rows per iteration, drawn i.i.d.
from a fixed distribution over a proper partition: rows whose z
coordinates are coupled by the z set must share a block. The derived
per-row and per-component activation probabilities feed the weighted
norms used by the diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (ImproperPartition, NonCoveringPartition,
                     ZeroProbabilityBlock)
from .problem import ConstraintSystem
from .terms import FeasibleSet, SumZeroPairs

PROB_SUM_TOL = 1e-12


@dataclass(eq=False)
class ProperPartition:
    """Disjoint cover of the constraint rows, closed under z coupling.

    ``component_map[b]`` lists the components owning the rows of block
    ``b``; those are exactly the components updated when the block fires.
    """

    blocks: tuple
    component_map: tuple
    num_rows: int
    num_components: int


def build_partition(z_set: FeasibleSet, cs: ConstraintSystem,
                    blocks) -> ProperPartition:
    """Validate a user-specified row partition and derive its component map.

    Raises :class:`NonCoveringPartition` when the blocks are not a
    disjoint cover of ``0..W-1`` and :class:`ImproperPartition` when two
    rows coupled through the z set land in different blocks.
    """
    cs.require_valid()
    norm_blocks = []
    owner = np.full(cs.W, -1, dtype=np.intp)
    for b, rows in enumerate(blocks):
        rows = np.asarray(sorted(int(r) for r in rows), dtype=np.intp)
        if rows.size == 0:
            raise NonCoveringPartition(f"block {b} is empty")
        if rows[0] < 0 or rows[-1] >= cs.W:
            raise NonCoveringPartition(f"block {b} has out-of-range rows")
        if np.any(owner[rows] >= 0):
            dup = int(rows[owner[rows] >= 0][0])
            raise NonCoveringPartition(f"row {dup} appears in two blocks")
        owner[rows] = b
        norm_blocks.append(rows)
    if np.any(owner < 0):
        missing = int(np.flatnonzero(owner < 0)[0])
        raise NonCoveringPartition(f"row {missing} not covered by any block")
    if isinstance(z_set, SumZeroPairs):
        for i, j in z_set.pairs:
            if owner[i] != owner[j]:
                raise ImproperPartition(
                    f"rows {i} and {j} are coupled by the z set but split "
                    f"across blocks {int(owner[i])} and {int(owner[j])}")
    component_map = tuple(
        np.unique(cs.row_block[rows]) for rows in norm_blocks)
    return ProperPartition(blocks=tuple(norm_blocks),
                           component_map=component_map,
                           num_rows=cs.W, num_components=cs.N)


def single_block_partition(cs: ConstraintSystem) -> ProperPartition:
    """The trivial partition: every row in one block (full activation)."""
    rows = np.arange(cs.W, dtype=np.intp)
    return ProperPartition(blocks=(rows,),
                           component_map=(np.unique(cs.row_block),),
                           num_rows=cs.W, num_components=cs.N)


@dataclass(eq=False)
class ActivationDistribution:
    """Block sampling distribution with derived row/component probabilities."""

    block_probs: np.ndarray
    lam: np.ndarray          # per-row activation probability
    alpha: np.ndarray        # per-component activation probability
    weight_diag: np.ndarray  # 1 / lam, the diagonal of the weighting matrix
    cum_probs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.cum_probs is None:
            cum = np.cumsum(self.block_probs)
            cum[-1] = 1.0
            self.cum_probs = cum


def derive_probabilities(partition: ProperPartition,
                         block_probs) -> ActivationDistribution:
    """Per-row and per-component activation probabilities.

    Each row belongs to exactly one block, so its probability is that
    block's; a component's probability sums over the blocks whose
    component map contains it. Every block needs strictly positive
    probability so that all rows fire infinitely often.
    """
    probs = np.asarray(block_probs, dtype=float)
    if probs.shape != (len(partition.blocks),):
        raise ZeroProbabilityBlock(
            f"need {len(partition.blocks)} block probabilities, got {probs.size}")
    if np.any(probs <= 0):
        bad = int(np.flatnonzero(probs <= 0)[0])
        raise ZeroProbabilityBlock(f"block {bad} has probability <= 0")
    if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
        raise ZeroProbabilityBlock(
            f"block probabilities sum to {probs.sum()!r}, expected 1")
    lam = np.empty(partition.num_rows)
    for b, rows in enumerate(partition.blocks):
        lam[rows] = probs[b]
    alpha = np.zeros(partition.num_components)
    for b, comps in enumerate(partition.component_map):
        alpha[comps] += probs[b]
    return ActivationDistribution(block_probs=probs, lam=lam, alpha=alpha,
                                  weight_diag=1.0 / lam)


def uniform_probs(partition: ProperPartition) -> np.ndarray:
    m = len(partition.blocks)
    return np.full(m, 1.0 / m)


_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class RngStream:
    """SplitMix64 stream: counter-based, identical on every platform.

    The generator is fixed (not numpy's) so that sampled trajectories,
    and therefore emitted CSV files, are reproducible bit for bit.
    """

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK64
        self._state = self.seed
        self.counter = 0

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        self.counter += 1
        return z ^ (z >> 31)

    def next_double(self) -> float:
        # 53 uniform mantissa bits in [0, 1)
        return (self.next_u64() >> 11) * 1.1102230246251565e-16  # 2**-53

    def normals(self, size: int) -> np.ndarray:
        """Standard normals via Box-Muller on fixed-order uniform draws."""
        out = np.empty(size)
        for i in range(0, size, 2):
            u1 = self.next_double()
            u2 = self.next_double()
            r = np.sqrt(-2.0 * np.log(1.0 - u1))
            out[i] = r * np.cos(2.0 * np.pi * u2)
            if i + 1 < size:
                out[i + 1] = r * np.sin(2.0 * np.pi * u2)
        return out


def sample_block(dist: ActivationDistribution, rng: RngStream) -> int:
    """Draw one block index by inverse CDF on a single uniform."""
    u = rng.next_double()
    idx = int(np.searchsorted(dist.cum_probs, u, side="right"))
    return min(idx, dist.block_probs.size - 1)
