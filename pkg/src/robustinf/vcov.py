"""Variance-covariance estimators: conventional, HC0-HC3, BM, cluster, multiway.

All estimators share the sandwich form bread * meat * bread with
bread = (X'X)^{-1}. Per-cluster sums run in fixed label order so repeated
runs are bit-stable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleError, LeverageInfeasible, ShapeMismatch, SingleCluster
from .regression import FitResult, leverage_infeasible_rows

CONVENTIONAL = "conventional"
HC0 = "hc0"
HC1 = "hc1"
HC2 = "hc2"
HC3 = "hc3"
HC2_BM = "hc2_bm"
CLUSTER_LZ = "cluster_lz"
MULTIWAY = "multiway"
MAX_SE = "max_se"

HC_VARIANTS = (HC0, HC1, HC2, HC3)


@dataclass(frozen=True)
class ClusterMap:
    """One clustering dimension: dense integer labels 0..C-1 for every row."""

    dimension_name: str
    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        lab = np.ascontiguousarray(np.asarray(self.labels, dtype=np.int64))
        if lab.ndim != 1:
            raise ShapeMismatch("cluster labels must be a vector")
        c = int(lab.max()) + 1 if lab.size else 0
        if c != self.n_clusters or not np.array_equal(np.unique(lab), np.arange(c)):
            raise ShapeMismatch(
                f"labels of dimension {self.dimension_name!r} are not dense 0..C-1"
            )
        if self.n_clusters < 2:
            raise SingleCluster(self.dimension_name, self.n_clusters)
        lab.setflags(write=False)
        object.__setattr__(self, "labels", lab)

    @classmethod
    def from_labels(cls, name: str, labels) -> "ClusterMap":
        """Densify arbitrary labels into 0..C-1 (first-appearance order)."""
        raw = np.asarray(labels)
        _, first_idx, inverse = np.unique(raw, return_index=True, return_inverse=True)
        order = np.argsort(np.argsort(first_idx))
        dense = order[inverse]
        return cls(dimension_name=name, labels=dense.astype(np.int64),
                   n_clusters=int(dense.max()) + 1 if dense.size else 0)


@dataclass(frozen=True)
class VcovEstimate:
    """A k x k coefficient covariance tagged with its estimator and dof.

    ``dof`` holds the per-coefficient reference-distribution degrees of
    freedom used by the testing layer. ``infeasible_obs`` lists rows whose
    leverage-one status would break the HC2/HC3/BM adjustments (informational
    for the estimators that still run). ``notes`` carries caveats that must
    surface in reports.
    """

    matrix: np.ndarray
    kind: str
    dof: np.ndarray
    cluster_counts: dict[str, int] | None = None
    infeasible_obs: tuple[int, ...] = ()
    eigenvalue_fix: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        m = (m + m.T) / 2.0
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        d = np.asarray(self.dof, dtype=np.float64)
        if d.shape != (m.shape[0],):
            raise ShapeMismatch("dof must be a per-coefficient vector")
        if not np.all(d > 0):
            raise ShapeMismatch("dof entries must be positive")
        d.setflags(write=False)
        object.__setattr__(self, "dof", d)

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.matrix), 0.0, None))


def _sandwich(fit: FitResult, meat: np.ndarray) -> np.ndarray:
    v = fit.bread @ meat @ fit.bread
    return (v + v.T) / 2.0


def vcov_conventional(fit: FitResult) -> VcovEstimate:
    """Homoskedastic OLS variance sigma^2 (X'X)^{-1} with the (N-k) divisor."""
    return VcovEstimate(
        matrix=fit.sigma2_hat * fit.bread,
        kind=CONVENTIONAL,
        dof=np.full(fit.k, float(fit.dof_residual)),
    )


def _hc_weights(fit: FitResult, variant: str) -> np.ndarray:
    e2 = fit.residuals**2
    if variant == HC0:
        return e2
    if variant == HC1:
        return e2 * (fit.n / (fit.n - fit.k))
    bad = leverage_infeasible_rows(fit)
    if bad.size:
        raise LeverageInfeasible(bad, variant.upper())
    if variant == HC2:
        return e2 / (1.0 - fit.leverage)
    if variant == HC3:
        return e2 / (1.0 - fit.leverage) ** 2
    raise ValueError(f"unknown HC variant {variant!r}")


def vcov_hc(fit: FitResult, variant: str = HC1) -> VcovEstimate:
    """Heteroskedasticity-consistent sandwich with the HC0..HC3 weightings.

    HC0 uses squared residuals as-is; HC1 rescales by N/(N-k); HC2 divides
    each squared residual by (1 - h_ii); HC3 divides by (1 - h_ii)^2. HC2 and
    HC3 refuse to run when any observation sits at leverage one.
    """
    variant = variant.lower()
    if variant not in HC_VARIANTS:
        raise ValueError(f"variant must be one of {HC_VARIANTS}, got {variant!r}")
    w = _hc_weights(fit, variant)
    meat = (fit.design * w[:, None]).T @ fit.design
    return VcovEstimate(
        matrix=_sandwich(fit, meat),
        kind=variant,
        dof=np.full(fit.k, float(fit.dof_residual)),
        infeasible_obs=tuple(int(i) for i in leverage_infeasible_rows(fit)),
    )


# _bm_dof materializes an n x n matrix; the correction targets small samples,
# so refuse rather than silently allocating gigabytes.
BM_MAX_ROWS = 10_000


def _bm_dof(fit: FitResult) -> np.ndarray:
    """Satterthwaite degrees of freedom for the HC2 variance estimator.

    For coefficient j the HC2 variance is a quadratic form e' A_j e in the
    regression errors, with A_j = sum_i (z_ij^2 / (1-h_ii)) m_i m_i' built
    from the annihilator rows m_i and the influence weights z_ij = X_i'
    (X'X)^{-1} e_j. Matching its first two moments to a chi-square under a
    reference error covariance Omega gives dof_j = tr(A_j Omega)^2 /
    tr((A_j Omega)^2).

    Omega is a smoothed variance profile: the leverage-adjusted squared
    residuals regressed on the design itself. On a two-group design this
    reproduces the groupwise sample variances, so the dof collapses to the
    classical Welch-Satterthwaite value; under flat residual dispersion it
    approaches the design-only (homoskedastic-reference) value. Builds an
    n x n matrix, so this is meant for the small samples where the
    correction matters.
    """
    n, k = fit.n, fit.k
    if n > BM_MAX_ROWS:
        raise InfeasibleError(
            f"moment-matched dof builds an n x n operator (n={n} > {BM_MAX_ROWS}); "
            "at this sample size the correction is unnecessary: use hc2/hc3"
        )
    one_minus_h = 1.0 - fit.leverage
    adj = fit.residuals**2 / one_minus_h

    # Fitted variance profile; clipped at zero, with a homoskedastic
    # fallback if the fit degenerates.
    coef = fit.bread @ (fit.design.T @ adj)
    omega = np.clip(fit.design @ coef, 0.0, None)
    if not np.any(omega > 0):
        omega = np.full(n, adj.mean() if adj.mean() > 0 else 1.0)

    q = fit.q
    # M Omega M without forming M: Omega - Q(Q'Omega) - (Omega Q)Q' + Q(Q'Omega Q)Q'
    qt_om = q.T * omega[None, :]
    core = qt_om @ q
    mom = np.diag(omega) - q @ qt_om - qt_om.T @ q.T + q @ core @ q.T
    mom = (mom + mom.T) / 2.0

    z = fit.design @ fit.bread  # column j = per-row influence weights z_ij
    d2 = z**2 / one_minus_h[:, None]  # (n, k)

    mom_diag = np.diag(mom)
    mom_sq = mom**2
    dof = np.empty(k)
    for j in range(k):
        u = d2[:, j]
        tr1 = float(u @ mom_diag)
        tr2 = float(u @ mom_sq @ u)
        dof[j] = tr1**2 / tr2 if tr2 > 0 else float(fit.dof_residual)
    return dof


def vcov_bm(fit: FitResult) -> VcovEstimate:
    """HC2 matrix with moment-matched (Satterthwaite) reference dof.

    The bias part is exactly HC2; the reference-distribution correction
    stores per-coefficient degrees of freedom for the testing layer instead
    of the blanket N-k.
    """
    hc2 = vcov_hc(fit, HC2)
    return VcovEstimate(
        matrix=hc2.matrix,
        kind=HC2_BM,
        dof=_bm_dof(fit),
        infeasible_obs=hc2.infeasible_obs,
    )


def _cluster_sums(values: np.ndarray, labels: np.ndarray, n_clusters: int) -> np.ndarray:
    """Per-cluster sums of rows, accumulated in fixed cluster order."""
    order = np.argsort(labels, kind="stable")
    sorted_vals = values[order]
    sorted_lab = labels[order]
    starts = np.flatnonzero(np.r_[True, np.diff(sorted_lab) > 0])
    sums = np.add.reduceat(sorted_vals, starts, axis=0)
    out = np.zeros((n_clusters,) + values.shape[1:])
    out[sorted_lab[starts]] = sums
    return out


def lz_small_sample_factor(n: int, k: int, n_clusters: int) -> float:
    """Finite-sample factor a = [C/(C-1)] [(N-1)/(N-k)] for the LZ meat."""
    return (n_clusters / (n_clusters - 1.0)) * ((n - 1.0) / (n - k))


def vcov_cluster(
    fit: FitResult, clusters: ClusterMap, *, small_sample: bool = True
) -> VcovEstimate:
    """Liang-Zeger cluster-robust sandwich over one clustering dimension.

    The meat is a * sum_c (X_c' e_c)(X_c' e_c)'. With ``small_sample`` the
    factor a is [C/(C-1)] [(N-1)/(N-k)]; disable it to force a = 1 (useful
    for algebraic checks such as the singleton-cluster == HC0 identity).
    Reference dof is C - 1.
    """
    if clusters.labels.shape[0] != fit.n:
        raise ShapeMismatch("cluster labels do not match the fitted sample")
    c = clusters.n_clusters
    if c < 2:
        raise SingleCluster(clusters.dimension_name, c)
    scores = fit.design * fit.residuals[:, None]
    sc = _cluster_sums(scores, clusters.labels, c)
    a = lz_small_sample_factor(fit.n, fit.k, c) if small_sample else 1.0
    meat = a * (sc.T @ sc)
    return VcovEstimate(
        matrix=_sandwich(fit, meat),
        kind=CLUSTER_LZ,
        dof=np.full(fit.k, float(c - 1)),
        cluster_counts={clusters.dimension_name: c},
    )


def intersection_clusters(dim_a: ClusterMap, dim_b: ClusterMap) -> ClusterMap:
    """Clustering on the joint (dim_a, dim_b) label pairs."""
    paired = dim_a.labels * np.int64(dim_b.n_clusters) + dim_b.labels
    return ClusterMap.from_labels(
        f"{dim_a.dimension_name}*{dim_b.dimension_name}", paired
    )


def vcov_multiway(
    fit: FitResult,
    dim_a: ClusterMap,
    dim_b: ClusterMap,
    *,
    small_sample: bool = True,
) -> VcovEstimate:
    """Two-way clustering: V_A + V_B - V_{A intersect B}.

    The add/subtract construction is not guaranteed positive semidefinite;
    any negative eigenvalue is truncated to zero and the repair is flagged
    on the estimate. Reference dof is the conservative min(C_A, C_B) - 1.
    """
    inter = intersection_clusters(dim_a, dim_b)
    va = vcov_cluster(fit, dim_a, small_sample=small_sample)
    vb = vcov_cluster(fit, dim_b, small_sample=small_sample)
    vab = vcov_cluster(fit, inter, small_sample=small_sample)
    combined = va.matrix + vb.matrix - vab.matrix

    fixed = False
    eigvals, eigvecs = np.linalg.eigh(combined)
    if np.any(eigvals < 0):
        fixed = True
        combined = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
        combined = (combined + combined.T) / 2.0

    c_min = min(dim_a.n_clusters, dim_b.n_clusters)
    notes = ["multiway reference dof uses the conservative min(C_a, C_b) - 1"]
    if fixed:
        notes.append("negative eigenvalues truncated to restore positive semidefiniteness")
    return VcovEstimate(
        matrix=combined,
        kind=MULTIWAY,
        dof=np.full(fit.k, float(c_min - 1)),
        cluster_counts={
            dim_a.dimension_name: dim_a.n_clusters,
            dim_b.dimension_name: dim_b.n_clusters,
            inter.dimension_name: inter.n_clusters,
        },
        eigenvalue_fix=fixed,
        notes=tuple(notes),
    )


def effective_clusters(fit: FitResult, clusters: ClusterMap, coef_index: int) -> float:
    """Effective number of clusters for one coefficient: G* = C / (1 + Gamma).

    Gamma is the relative variance of the cluster-level design weights
    gamma_c = l' (X_c' X_c) l with l = (X'X)^{-1} e_j, i.e. each cluster's
    share of the coefficient's homoskedastic-reference variance. Perfectly
    balanced clusters (equal size and leverage) give Gamma = 0 and G* = C;
    size or leverage concentration shrinks G*. Diagnostic only, never a gate.
    """
    if clusters.labels.shape[0] != fit.n:
        raise ShapeMismatch("cluster labels do not match the fitted sample")
    c = clusters.n_clusters
    if c < 2:
        raise SingleCluster(clusters.dimension_name, c)
    ell = fit.bread[:, coef_index]
    w = (fit.design @ ell) ** 2
    gamma = _cluster_sums(w[:, None], clusters.labels, c)[:, 0]
    gbar = gamma.mean()
    if gbar <= 0:
        return float(c)
    rel_var = float(np.mean((gamma - gbar) ** 2) / gbar**2)
    return float(c / (1.0 + rel_var))
