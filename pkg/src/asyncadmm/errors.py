"""Exception hierarchy for asyncadmm."""


class AsyncAdmmError(Exception):
    """Base class for all library errors."""


class InvalidProblem(AsyncAdmmError):
    """Problem data violates a structural requirement."""


class DimensionMismatch(AsyncAdmmError):
    """Vector or matrix dimensions are inconsistent."""


class UnsupportedTerm(AsyncAdmmError):
    """No solver is available for this objective term."""


class UnsupportedSet(AsyncAdmmError):
    """No solver is available for this feasible set."""


class UnsupportedMix(AsyncAdmmError):
    """Reference oracle does not cover this combination of terms."""


class NonfiniteInput(AsyncAdmmError):
    """Subproblem data contains NaN or infinity."""


class UnboundedSubproblem(AsyncAdmmError):
    """A subproblem minimizer does not exist (objective unbounded below)."""


class ImproperPartition(AsyncAdmmError):
    """Partition splits coupled constraint rows across blocks."""


class NonCoveringPartition(AsyncAdmmError):
    """Partition blocks do not form a disjoint cover of the rows."""


class ZeroProbabilityBlock(AsyncAdmmError):
    """A partition block has activation probability <= 0."""


class DivergenceError(AsyncAdmmError):
    """Iterate norms exceeded the divergence guard or became non-finite."""


class MissingReference(AsyncAdmmError):
    """A diagnostic requires a reference solution that was not supplied."""


class NonCompactSets(AsyncAdmmError):
    """Rate constants require compact feasible sets."""


class GridTooLarge(AsyncAdmmError):
    """Grid maximization would exceed the configured point budget."""


class NonPositiveSeries(AsyncAdmmError):
    """Log-log rate fit requires strictly positive values."""


class DisconnectedGraph(AsyncAdmmError):
    """Consensus requires a connected graph."""


class UnknownBenchmark(AsyncAdmmError):
    """Benchmark name is not recognized."""


class ParseError(AsyncAdmmError):
    """Config or data file is malformed."""


class ValidationError(AsyncAdmmError):
    """Config parsed but failed semantic validation."""
