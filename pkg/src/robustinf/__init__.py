"""robustinf: robust-inference engine for linear regression.

Sandwich and cluster-robust variance estimators, small-sample reference
distributions, multiple-hypothesis-testing corrections, and a deterministic
parallel resampling engine (pairs/residual/wild bootstrap and randomization
inference), with a batch CLI (``analyze``) over CSV data.
"""

from ._backend import backend_name, has_compiled, set_backend
from .data import (
    Dataset,
    IngestReport,
    build_dataset,
    collapse_periods,
    dataset_from_columns,
    ingest_csv,
    read_csv_columns,
)
from .inference import TestReport, max_se_heuristic, t_tests
from .mht import (
    MHTReport,
    PValueFamily,
    benjamini_hochberg,
    bky_sharpened,
    bonferroni,
    familywise_error_rate,
    holm,
    romano_wolf,
    westfall_young,
)
from .regression import FitResult, fit_ols, leverage, leverage_infeasible_rows
from .resample import (
    BootstrapT,
    FamilyReplicates,
    ResampleDistribution,
    ResamplePlan,
    RIResult,
    bootstrap_pairs,
    bootstrap_residual,
    bootstrap_se,
    bootstrap_t,
    bootstrap_t_critical_index,
    bootstrap_wild,
    family_null_replicates,
    percentile_ci,
    percentile_indices,
    randomization_inference,
)
from .vcov import (
    ClusterMap,
    VcovEstimate,
    effective_clusters,
    vcov_bm,
    vcov_cluster,
    vcov_conventional,
    vcov_hc,
    vcov_multiway,
)

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "IngestReport",
    "build_dataset",
    "collapse_periods",
    "dataset_from_columns",
    "ingest_csv",
    "read_csv_columns",
    "FitResult",
    "fit_ols",
    "leverage",
    "leverage_infeasible_rows",
    "ClusterMap",
    "VcovEstimate",
    "vcov_conventional",
    "vcov_hc",
    "vcov_bm",
    "vcov_cluster",
    "vcov_multiway",
    "effective_clusters",
    "TestReport",
    "t_tests",
    "max_se_heuristic",
    "PValueFamily",
    "MHTReport",
    "bonferroni",
    "holm",
    "westfall_young",
    "romano_wolf",
    "benjamini_hochberg",
    "bky_sharpened",
    "familywise_error_rate",
    "ResamplePlan",
    "ResampleDistribution",
    "BootstrapT",
    "RIResult",
    "FamilyReplicates",
    "bootstrap_pairs",
    "bootstrap_residual",
    "bootstrap_wild",
    "bootstrap_se",
    "bootstrap_t",
    "percentile_ci",
    "percentile_indices",
    "bootstrap_t_critical_index",
    "randomization_inference",
    "family_null_replicates",
    "backend_name",
    "has_compiled",
    "set_backend",
    "__version__",
]
