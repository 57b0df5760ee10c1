"""Exception types shared across the package."""


class PairnetError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(PairnetError):
    """Two objects that must share a node count do not."""


class DegenerateInputError(PairnetError):
    """Input has no mass where an estimator needs it (e.g. empty graph)."""


class RankDeficiencyError(PairnetError):
    """Requested embedding dimension exceeds the numerical rank."""


class ClusteringError(PairnetError):
    """k-means could not produce the requested number of nonempty clusters."""


class OptimizerError(PairnetError):
    """Likelihood optimization produced a non-finite objective."""


class ContractViolationError(PairnetError):
    """A caller-supplied null-restriction does not satisfy its contract."""


class BootstrapAbortError(PairnetError):
    """A bootstrap replicate kept failing after the retry budget."""
