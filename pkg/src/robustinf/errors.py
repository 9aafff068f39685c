"""Exception hierarchy shared across the library.

Every error carries a machine-readable ``code`` so the CLI (and foreign
callers parsing its JSON) can branch without string matching. Exit-code
mapping lives in :mod:`robustinf.cli`.
"""

from __future__ import annotations

from collections.abc import Sequence


class RobustInfError(Exception):
    """Base class for all library errors."""

    code = "error"


class ConfigError(RobustInfError):
    """Invalid or inconsistent analysis configuration."""

    code = "config_error"


class DataError(RobustInfError):
    """Unusable input data."""

    code = "data_error"


class ParseError(DataError):
    """A cell could not be parsed. Reports 1-based line and the column name."""

    code = "parse_error"

    def __init__(self, line: int, column: str, value: str):
        self.line = line
        self.column = column
        self.value = value
        super().__init__(f"line {line}, column {column!r}: cannot parse {value!r} as a number")


class EmptyAfterFiltering(DataError):
    """All rows were dropped during ingestion."""

    code = "empty_after_filtering"


class TooFewRows(DataError):
    """Fewer rows than coefficients to estimate."""

    code = "too_few_rows"

    def __init__(self, n: int, k: int):
        self.n = n
        self.k = k
        super().__init__(f"need more rows than coefficients: n={n}, k={k}")


class InfeasibleError(RobustInfError):
    """Numeric infeasibility: the requested estimator cannot be computed."""

    code = "infeasible"


class RankDeficient(InfeasibleError):
    """Design matrix is column-rank deficient; names the offending columns."""

    code = "rank_deficient"

    def __init__(self, columns: Sequence[str], rank: int, k: int):
        self.columns = list(columns)
        self.rank = rank
        self.k = k
        super().__init__(
            f"design matrix has rank {rank} < {k}; offending columns: {', '.join(self.columns)}"
        )


class LeverageInfeasible(InfeasibleError):
    """Leverage-one observations make HC2/HC3/BM undefined.

    These estimators divide by (1 - h_ii); a saturated regressor drives
    h_ii to one for the rows it identifies. The indices are reported so
    the offending specification can be found, with a hint toward
    estimators that remain usable.
    """

    code = "leverage_infeasible"

    def __init__(self, indices: Sequence[int], estimator: str):
        self.indices = [int(i) for i in indices]
        self.estimator = estimator
        shown = ", ".join(str(i) for i in self.indices[:20])
        more = "" if len(self.indices) <= 20 else f" (+{len(self.indices) - 20} more)"
        super().__init__(
            f"{estimator} is infeasible: leverage equals one at rows [{shown}]{more}; "
            "use HC1 or a wild bootstrap instead"
        )


class SingleCluster(InfeasibleError):
    """Cluster-robust estimators need at least two clusters."""

    code = "single_cluster"

    def __init__(self, dimension: str, n_clusters: int):
        self.dimension = dimension
        self.n_clusters = n_clusters
        super().__init__(f"cluster dimension {dimension!r} has {n_clusters} cluster(s); need >= 2")


class ZeroSE(InfeasibleError):
    """A coefficient has an exactly zero standard error but nonzero estimate."""

    code = "zero_se"

    def __init__(self, indices: Sequence[int]):
        self.indices = [int(i) for i in indices]
        super().__init__(
            f"zero standard error with nonzero estimate at coefficient(s) {self.indices}; "
            "the test statistic is degenerate"
        )


class ShapeMismatch(RobustInfError):
    code = "shape_mismatch"


class DegenerateResample(RobustInfError):
    """Redraw budget exhausted while resampling rank-deficient designs."""

    code = "degenerate_resample"


class TooFewReplications(RobustInfError):
    code = "too_few_replications"


class MissingPerReplicationSE(RobustInfError):
    """Bootstrap-t needs per-replication standard errors in the distribution."""

    code = "missing_per_replication_se"


class MissingStatistics(RobustInfError):
    """Westfall-Young / Romano-Wolf need observed statistics and replicates."""

    code = "missing_statistics"


class NoTreatment(RobustInfError):
    code = "no_treatment"


class UnknownAssignmentScheme(RobustInfError):
    code = "unknown_assignment_scheme"


class WeightLawUnavailable(RobustInfError):
    code = "weight_law_unavailable"


class ReplicationCountWarning(UserWarning):
    """Raised (as a warning) when the replication count is below guidance."""
