"""Seeded, parallel resampling engine.

Pairs, residual, wild, and wild-cluster bootstraps plus randomization
inference. Every replication draws from its own counter-based substream
keyed by (seed, replication index), so output is bit-identical for a given
backend regardless of how replications are scheduled across workers.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from scipy.linalg import solve_triangular

from . import _kernels_py
from ._backend import kernels
from .data import Dataset
from .errors import (
    ConfigError,
    DegenerateResample,
    LeverageInfeasible,
    MissingPerReplicationSE,
    NoTreatment,
    ReplicationCountWarning,
    ShapeMismatch,
    TooFewReplications,
    UnknownAssignmentScheme,
    WeightLawUnavailable,
    ZeroSE,
)
from .regression import FitResult, fit_ols, leverage_infeasible_rows
from .vcov import ClusterMap, VcovEstimate, lz_small_sample_factor

PAIRS = "pairs"
RESIDUAL = "residual"
WILD = "wild"
WILD_CLUSTER = "wild_cluster"
RI = "ri"
SCHEMES = (PAIRS, RESIDUAL, WILD, WILD_CLUSTER, RI)

RADEMACHER = "rademacher"
MAMMEN = "mammen"
WEBB = "webb"
WEIGHT_LAWS = (RADEMACHER, MAMMEN, WEBB)

COMPLETE = "complete"
BERNOULLI = "bernoulli"
CLUSTER_ASSIGNMENT = "cluster"
ASSIGNMENTS = (COMPLETE, BERNOULLI, CLUSTER_ASSIGNMENT)

# Replication-count guidance (warn, don't error, below these).
SE_REPLICATION_GUIDANCE = 5_000
PIVOTAL_REPLICATION_GUIDANCE = 10_000

# Per-replication redraw budget for rank-deficient resamples; the total
# redraw budget is therefore bounded by 100 * r.
MAX_REDRAWS_PER_REPLICATION = 100

_CHUNK = 1024

_SE_CODES = {
    "conventional": _kernels_py.SE_CONVENTIONAL,
    "hc0": _kernels_py.SE_HC0,
    "hc1": _kernels_py.SE_HC1,
    "hc2": _kernels_py.SE_HC2,
    "hc3": _kernels_py.SE_HC3,
    "cluster": _kernels_py.SE_CLUSTER,
}

# Mammen two-point law: golden-ratio support with mean 0 and variance 1.
_SQRT5 = math.sqrt(5.0)
_MAMMEN_LO = -(_SQRT5 - 1.0) / 2.0
_MAMMEN_HI = (_SQRT5 + 1.0) / 2.0
_MAMMEN_P_LO = (_SQRT5 + 1.0) / (2.0 * _SQRT5)
# Webb six-point law: +-sqrt(1/2), +-1, +-sqrt(3/2), each with probability 1/6.
_WEBB_POINTS = np.array(
    [-math.sqrt(1.5), -1.0, -math.sqrt(0.5), math.sqrt(0.5), 1.0, math.sqrt(1.5)]
)


_MASK64 = (1 << 64) - 1


def _philox_state(seed: int, index: int) -> dict:
    # counter word 2 carries the replication index: each replication owns a
    # disjoint 2^128-block window of the seed's counter space
    return {
        "bit_generator": "Philox",
        "state": {
            "counter": np.array(
                [0, 0, index & _MASK64, (index >> 64) & _MASK64], dtype=np.uint64
            ),
            "key": np.array([seed & _MASK64, (seed >> 64) & _MASK64], dtype=np.uint64),
        },
        "buffer": np.zeros(4, dtype=np.uint64),
        "buffer_pos": 4,
        "has_uint32": 0,
        "uinteger": 0,
    }


def _substream(seed: int, index: int) -> np.random.Generator:
    """Counter-based substream for one replication: keyed by (seed, index).

    The Philox counter is set directly (a keyed construction would pull OS
    entropy for a seed sequence that is immediately discarded), so output
    never depends on how replications are scheduled across workers.
    """
    bg = np.random.Philox(seed=0)  # placeholder state, replaced next
    bg.state = _philox_state(int(seed), int(index))
    return np.random.Generator(bg)


class _SubstreamPool:
    """Reusable generator for a worker chunk: same streams as _substream."""

    def __init__(self, seed: int):
        self._seed = int(seed)
        self._bg = np.random.Philox(seed=0)
        self._gen = np.random.Generator(self._bg)

    def at(self, index: int) -> np.random.Generator:
        self._bg.state = _philox_state(self._seed, int(index))
        return self._gen


def _ceil_index(x: float) -> int:
    """ceil with a tiny slack so binary-fraction noise cannot bump the index."""
    return int(math.ceil(x - 1e-9))


def percentile_indices(r: int, alpha: float) -> tuple[int, int]:
    """1-indexed order statistics bounding the two-sided (1-alpha) CI.

    For r = 10,000 and alpha = 0.05 these are exactly (250, 9750).
    """
    return _ceil_index(r * alpha / 2.0), _ceil_index(r * (1.0 - alpha / 2.0))


def bootstrap_t_critical_index(r: int, alpha: float) -> int:
    """1-indexed order statistic of |t| giving the symmetric critical value.

    For r = 10,000 and alpha = 0.05 this is exactly 9,500.
    """
    return _ceil_index(r * (1.0 - alpha))


@dataclass(frozen=True)
class ResamplePlan:
    """What to resample, how many times, and from which seed.

    ``null_coefficient`` (with ``null_value``) imposes a coefficient
    restriction before residual/wild resampling: the innovations come from
    the restricted fit, so replicates are generated under that null.
    Seeds are mandatory: no wall-clock seeding.
    """

    scheme: str
    replications: int
    seed: int
    cluster_map: ClusterMap | None = None
    wild_weights: str = RADEMACHER
    null_coefficient: str | int | None = None
    null_value: float = 0.0
    assignment: str = COMPLETE
    bernoulli_p: float | None = None
    exhaustive_threshold: int = 100_000

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown resampling scheme {self.scheme!r}")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if not isinstance(self.seed, (int, np.integer)):
            raise ConfigError("seed must be an integer (seeds are mandatory)")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in 64 bits")
        if self.wild_weights not in WEIGHT_LAWS:
            raise WeightLawUnavailable(
                f"unknown wild weight law {self.wild_weights!r}; "
                f"choose one of {WEIGHT_LAWS}"
            )
        if self.assignment not in ASSIGNMENTS:
            raise UnknownAssignmentScheme(
                f"unknown assignment scheme {self.assignment!r}; "
                f"choose one of {ASSIGNMENTS}"
            )
        if self.scheme == WILD_CLUSTER and self.cluster_map is None:
            raise ConfigError("wild_cluster scheme needs a cluster_map")


@dataclass(frozen=True)
class ResampleDistribution:
    """Per-replication coefficient draws (and SEs) from one bootstrap run.

    The original-sample coefficients are retained untouched in
    ``original_beta``; ``center_beta`` is the data-generating center of the
    replications (the restricted fit when a null was imposed).
    """

    scheme: str
    seed: int
    replications: int
    coefficients: np.ndarray
    se: np.ndarray | None
    original_beta: np.ndarray
    center_beta: np.ndarray
    column_names: tuple[str, ...]
    null_coefficient: int | None = None
    null_value: float = 0.0
    n_redraws: int = 0
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.coefficients.shape[0] != self.replications:
            raise ShapeMismatch("coefficient draws do not match replication count")
        self.coefficients.setflags(write=False)
        if self.se is not None:
            self.se.setflags(write=False)

    def coef_index(self, coef) -> int:
        if isinstance(coef, str):
            return self.column_names.index(coef)
        return int(coef)

    def t_draws(self, center: str = "mean") -> np.ndarray:
        """Per-replication t statistics (r, k) under the chosen centering."""
        if self.se is None:
            raise MissingPerReplicationSE(
                "this distribution was built without per-replication SEs"
            )
        if center == "mean":
            c = self.coefficients.mean(axis=0)
        elif center == "original":
            c = self.original_beta
        elif center == "null":
            c = self.center_beta
        else:
            raise ValueError(f"unknown centering {center!r}")
        num = self.coefficients - c[None, :]
        out = np.zeros_like(num)
        ok = self.se > 0
        np.divide(num, self.se, out=out, where=ok)
        out[~ok & (num != 0.0)] = np.inf
        return out


def _warn_low(r: int, guidance: int, context: str) -> None:
    if r < guidance:
        warnings.warn(
            f"{r} replications is below the r >= {guidance:,} guidance for {context}",
            ReplicationCountWarning,
            stacklevel=3,
        )


def _resolve_se_code(se_kind, fit: FitResult, plan: ResamplePlan) -> int:
    if se_kind is None:
        return _kernels_py.SE_NONE
    code = _SE_CODES.get(se_kind)
    if code is None:
        raise ConfigError(f"unknown per-replication SE kind {se_kind!r}")
    if code in (_kernels_py.SE_HC2, _kernels_py.SE_HC3):
        bad = leverage_infeasible_rows(fit)
        if bad.size:
            raise LeverageInfeasible(bad, se_kind.upper())
    if code == _kernels_py.SE_CLUSTER and plan.cluster_map is None:
        raise ConfigError("per-replication cluster SEs need a cluster_map")
    return code


def _parallel_ranges(r: int, n_workers: int, run):
    ranges = [(s, min(s + _CHUNK, r)) for s in range(0, r, _CHUNK)]
    if n_workers <= 1 or len(ranges) == 1:
        return [run(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        return list(pool.map(lambda ab: run(*ab), ranges))


def _resolve_null(plan: ResamplePlan, fit: FitResult) -> int | None:
    if plan.null_coefficient is None:
        return None
    return fit.coef_index(plan.null_coefficient)


def _restricted_fit(fit: FitResult, j: int, value: float) -> tuple[np.ndarray, np.ndarray]:
    """Least squares subject to beta_j = value: coefficients and residuals."""
    X = fit.design
    y_adj = fit.outcome - value * X[:, j]
    keep = [c for c in range(fit.k) if c != j]
    beta = np.zeros(fit.k)
    beta[j] = value
    if keep:
        Z = X[:, keep]
        coef, *_ = np.linalg.lstsq(Z, y_adj, rcond=None)
        beta[keep] = coef
        resid = y_adj - Z @ coef
    else:
        resid = y_adj
    return beta, resid


def _draw_wild_weights(rng: np.random.Generator, law: str, size: int) -> np.ndarray:
    if law == RADEMACHER:
        return rng.integers(0, 2, size).astype(np.float64) * 2.0 - 1.0
    if law == MAMMEN:
        u = rng.random(size)
        return np.where(u < _MAMMEN_P_LO, _MAMMEN_LO, _MAMMEN_HI)
    if law == WEBB:
        return _WEBB_POINTS[rng.integers(0, 6, size)]
    raise WeightLawUnavailable(law)


def _fixed_design_bootstrap(
    data: Dataset,
    plan: ResamplePlan,
    columns,
    se_kind,
    n_workers: int,
    build_u,
    scheme_note: str,
) -> ResampleDistribution:
    fit = fit_ols(data, columns)
    _warn_low(plan.replications, SE_REPLICATION_GUIDANCE, "bootstrap standard errors")
    se_code = _resolve_se_code(se_kind, fit, plan)

    j_null = _resolve_null(plan, fit)
    if j_null is not None:
        center_beta, base_resid = _restricted_fit(fit, j_null, plan.null_value)
    else:
        center_beta, base_resid = fit.beta, fit.residuals

    w_mat = fit.design @ fit.bread
    bread_diag = np.diag(fit.bread).copy()
    labels = None
    n_clusters = 0
    cluster_a = 1.0
    if se_code == _kernels_py.SE_CLUSTER:
        labels = plan.cluster_map.labels
        n_clusters = plan.cluster_map.n_clusters
        cluster_a = lz_small_sample_factor(fit.n, fit.k, n_clusters)

    n = fit.n

    def run(start: int, stop: int):
        u = np.empty((stop - start, n))
        pool = _SubstreamPool(plan.seed)
        for i in range(start, stop):
            u[i - start] = build_u(pool.at(i), base_resid)
        return kernels().fixed_core(
            fit.q, w_mat, center_beta, u, fit.leverage, se_code,
            bread_diag, float(fit.dof_residual), labels, n_clusters, cluster_a,
        )

    parts = _parallel_ranges(plan.replications, n_workers, run)
    beta = np.vstack([p[0] for p in parts])
    se = np.vstack([p[1] for p in parts]) if se_code != _kernels_py.SE_NONE else None
    return ResampleDistribution(
        scheme=plan.scheme,
        seed=plan.seed,
        replications=plan.replications,
        coefficients=beta,
        se=se,
        original_beta=fit.beta.copy(),
        center_beta=center_beta,
        column_names=fit.column_names,
        null_coefficient=j_null,
        null_value=plan.null_value,
        notes=(scheme_note,),
    )


def bootstrap_residual(
    data: Dataset, plan: ResamplePlan, columns=None, *, se_kind=None, n_workers: int = 1
) -> ResampleDistribution:
    """Residual bootstrap: covariates fixed, residuals redrawn with replacement.

    Innovations are drawn from the centered residuals of the (optionally
    null-restricted) fit, so the covariate matrix is structurally identical
    across replications.
    """
    if plan.scheme != RESIDUAL:
        raise ConfigError(f"plan scheme is {plan.scheme!r}, expected {RESIDUAL!r}")

    def build_u(rng, base_resid):
        centered = base_resid - base_resid.mean()
        return centered[rng.integers(0, base_resid.shape[0], base_resid.shape[0])]

    return _fixed_design_bootstrap(
        data, plan, columns, se_kind, n_workers, build_u,
        "residual bootstrap: covariates held fixed, centered residuals redrawn",
    )


def bootstrap_wild(
    data: Dataset, plan: ResamplePlan, columns=None, *, se_kind=None, n_workers: int = 1
) -> ResampleDistribution:
    """Wild bootstrap: residuals flipped by mean-zero unit-variance weights.

    Weights are drawn per observation (``wild``) or once per cluster
    (``wild_cluster``) from the Rademacher, Mammen, or Webb law.
    """
    if plan.scheme not in (WILD, WILD_CLUSTER):
        raise ConfigError(f"plan scheme is {plan.scheme!r}, expected wild/wild_cluster")
    law = plan.wild_weights
    if plan.scheme == WILD_CLUSTER:
        labels = plan.cluster_map.labels
        n_clusters = plan.cluster_map.n_clusters

        def build_u(rng, base_resid):
            v = _draw_wild_weights(rng, law, n_clusters)
            return base_resid * v[labels]

    else:

        def build_u(rng, base_resid):
            return base_resid * _draw_wild_weights(rng, law, base_resid.shape[0])

    return _fixed_design_bootstrap(
        data, plan, columns, se_kind, n_workers, build_u,
        f"wild bootstrap with {law} weights"
        + (" drawn per cluster" if plan.scheme == WILD_CLUSTER else ""),
    )


def _fit_rows(X: np.ndarray, y: np.ndarray, rows: np.ndarray):
    """OLS on a row subset; returns (beta, ginv, resid) or None if singular."""
    xs = X[rows]
    ys = y[rows]
    if xs.shape[0] <= xs.shape[1]:
        return None
    gram = xs.T @ xs
    L = _kernels_py._chol_factor(gram)
    if L is None:
        return None
    rhs = xs.T @ ys
    z = solve_triangular(L, rhs, lower=True)
    beta = solve_triangular(L.T, z, lower=False)
    l_inv = solve_triangular(L, np.eye(xs.shape[1]), lower=True)
    ginv = l_inv.T @ l_inv
    return beta, ginv, ys - xs @ beta


def bootstrap_pairs(
    data: Dataset, plan: ResamplePlan, columns=None, *, se_kind=None, n_workers: int = 1
) -> ResampleDistribution:
    """Pairs bootstrap: redraw (y_i, X_i) rows (or whole clusters) with replacement.

    Rank-deficient resamples are redrawn from the same replication substream
    (so results stay deterministic) with a budget of
    ``MAX_REDRAWS_PER_REPLICATION`` per replication; exhausting it raises
    :class:`DegenerateResample`. With a ``cluster_map`` the draw is at
    cluster level, every replication's rows partition into whole original
    clusters, and the replication sample size varies with the drawn cluster
    sizes.
    """
    if plan.scheme != PAIRS:
        raise ConfigError(f"plan scheme is {plan.scheme!r}, expected {PAIRS!r}")
    fit = fit_ols(data, columns)
    _warn_low(plan.replications, SE_REPLICATION_GUIDANCE, "bootstrap standard errors")
    se_code = _resolve_se_code(se_kind, fit, plan)

    if plan.cluster_map is not None:
        return _cluster_pairs(data, plan, fit, se_kind, se_code, n_workers)

    X, y = fit.design, fit.outcome
    n = fit.n

    # workers return their redraw counts rather than touching shared state,
    # so n_redraws is deterministic for any worker count
    def run(start: int, stop: int):
        idx = np.empty((stop - start, n), dtype=np.int64)
        pool = _SubstreamPool(plan.seed)
        for i in range(start, stop):
            idx[i - start] = pool.at(i).integers(0, n, n)
        beta, se, singular = kernels().pairs_core(X, y, idx, se_code)
        local_redraws = 0
        for local in np.flatnonzero(singular):
            rng = _substream(plan.seed, start + local)
            rng.integers(0, n, n)  # replay the draw that was already consumed
            done = False
            for _ in range(MAX_REDRAWS_PER_REPLICATION):
                local_redraws += 1
                rows = rng.integers(0, n, n)
                b1, s1, bad1 = kernels().pairs_core(X, y, rows[None, :], se_code)
                if not bad1[0]:
                    beta[local] = b1[0]
                    if se is not None:
                        se[local] = s1[0]
                    done = True
                    break
            if not done:
                raise DegenerateResample(
                    f"replication {start + local} stayed rank-deficient after "
                    f"{MAX_REDRAWS_PER_REPLICATION} redraws"
                )
        return beta, se, local_redraws

    parts = _parallel_ranges(plan.replications, n_workers, run)
    beta = np.vstack([p[0] for p in parts])
    se = np.vstack([p[1] for p in parts]) if se_code != _kernels_py.SE_NONE else None
    return ResampleDistribution(
        scheme=PAIRS,
        seed=plan.seed,
        replications=plan.replications,
        coefficients=beta,
        se=se,
        original_beta=fit.beta.copy(),
        center_beta=fit.beta.copy(),
        column_names=fit.column_names,
        n_redraws=sum(p[2] for p in parts),
        notes=("pairs bootstrap: rows redrawn with replacement",),
    )


def _draw_cluster_resample(rng, cluster_rows, n_clusters):
    """One cluster-level pairs draw: C cluster ids with replacement, and the
    row indices of the drawn clusters concatenated in draw order (so every
    replication's rows partition into whole original clusters)."""
    drawn = rng.integers(0, n_clusters, n_clusters)
    rows = np.concatenate([cluster_rows[c] for c in drawn])
    return drawn, rows


def _cluster_pairs(data, plan, fit, se_kind, se_code, n_workers):
    labels = plan.cluster_map.labels
    if labels.shape[0] != fit.n:
        raise ShapeMismatch("cluster labels do not match the fitted sample")
    n_clusters = plan.cluster_map.n_clusters
    cluster_rows = [np.flatnonzero(labels == c) for c in range(n_clusters)]
    X, y = fit.design, fit.outcome
    k = fit.k

    def one_rep(rng):
        for attempt in range(MAX_REDRAWS_PER_REPLICATION + 1):
            drawn, rows = _draw_cluster_resample(rng, cluster_rows, n_clusters)
            fitted = _fit_rows(X, y, rows)
            if fitted is not None:
                return fitted, drawn, rows, attempt
        raise DegenerateResample(
            f"cluster resample stayed rank-deficient after "
            f"{MAX_REDRAWS_PER_REPLICATION} redraws"
        )

    def run(start: int, stop: int):
        beta = np.zeros((stop - start, k))
        se = np.zeros((stop - start, k)) if se_code != _kernels_py.SE_NONE else None
        local_redraws = 0
        pool = _SubstreamPool(plan.seed)
        for i in range(start, stop):
            (beta_r, ginv, resid), drawn, rows, attempts = one_rep(pool.at(i))
            local_redraws += attempts
            beta[i - start] = beta_r
            if se is None:
                continue
            m = rows.shape[0]
            if se_code == _kernels_py.SE_CLUSTER:
                w_rows = X[rows] @ ginv
                offsets = np.cumsum([0] + [cluster_rows[c].shape[0] for c in drawn])
                a = lz_small_sample_factor(m, k, n_clusters)
                se2 = np.zeros(k)
                scores = np.add.reduceat(w_rows * resid[:, None], offsets[:-1], axis=0)
                se2 = a * (scores**2).sum(axis=0)
                se[i - start] = np.sqrt(se2)
            elif se_code == _kernels_py.SE_CONVENTIONAL:
                sigma2 = (resid @ resid) / (m - k)
                se[i - start] = np.sqrt(sigma2 * np.diag(ginv))
            else:
                w_rows = X[rows] @ ginv
                if se_code == _kernels_py.SE_HC0:
                    omega = resid**2
                elif se_code == _kernels_py.SE_HC1:
                    omega = resid**2 * (m / (m - k))
                else:
                    h = np.einsum("ij,ij->i", w_rows, X[rows])
                    h = np.clip(h, 0.0, 1.0 - 1e-12)
                    base = resid**2 / (1.0 - h)
                    omega = base if se_code == _kernels_py.SE_HC2 else base / (1.0 - h)
                se[i - start] = np.sqrt((w_rows**2 * omega[:, None]).sum(axis=0))
        return beta, se, local_redraws

    parts = _parallel_ranges(plan.replications, n_workers, run)
    beta = np.vstack([p[0] for p in parts])
    se = np.vstack([p[1] for p in parts]) if se_code != _kernels_py.SE_NONE else None
    return ResampleDistribution(
        scheme=PAIRS,
        seed=plan.seed,
        replications=plan.replications,
        coefficients=beta,
        se=se,
        original_beta=fit.beta.copy(),
        center_beta=fit.beta.copy(),
        column_names=fit.column_names,
        n_redraws=sum(p[2] for p in parts),
        notes=("pairs bootstrap: whole clusters redrawn with replacement",),
    )


def bootstrap_se(dist: ResampleDistribution, coef) -> float:
    """Bootstrap standard error: sqrt of (1/(r-1)) sum (beta_i - beta_bar)^2."""
    if dist.replications < 2:
        raise TooFewReplications("bootstrap SE needs at least 2 replications")
    draws = dist.coefficients[:, dist.coef_index(coef)]
    centered = draws - draws.mean()
    return float(math.sqrt((centered @ centered) / (dist.replications - 1)))


def percentile_ci(dist: ResampleDistribution, coef, alpha: float) -> tuple[float, float]:
    """Percentile bootstrap CI from the sorted coefficient draws.

    Bounds are the ceil(r*alpha/2)-th and ceil(r*(1-alpha/2))-th order
    statistics (1-indexed): the 250th and 9,750th elements at r = 10,000,
    alpha = 0.05.
    """
    r = dist.replications
    if r * alpha / 2.0 < 1.0 - 1e-9:
        raise TooFewReplications(
            f"r * alpha/2 must be >= 1; got r={r}, alpha={alpha}"
        )
    _warn_low(r, PIVOTAL_REPLICATION_GUIDANCE, "percentile confidence intervals")
    lo_i, hi_i = percentile_indices(r, alpha)
    draws = np.sort(dist.coefficients[:, dist.coef_index(coef)])
    return float(draws[lo_i - 1]), float(draws[hi_i - 1])


@dataclass(frozen=True)
class BootstrapT:
    """Symmetric percentile-t results for one coefficient."""

    coefficient: str
    estimate: float
    se: float
    t_observed: float
    critical_value: float
    p_value: float
    ci_low: float
    ci_high: float
    center: str


def bootstrap_t(
    dist: ResampleDistribution,
    fit: FitResult,
    vcov: VcovEstimate,
    coef,
    alpha: float = 0.05,
    *,
    null_value: float = 0.0,
    center: str = "mean",
) -> BootstrapT:
    """Percentile-t: critical value from the ordered |t| of the replications.

    Per-replication t statistics are (beta_i - center)/se_i with the
    bootstrap mean as the default center (``center='original'`` and, for
    null-imposed distributions, ``center='null'`` are available). The
    symmetric critical value is the ceil(r*(1-alpha))-th ordered |t| (the
    9,500th at r = 10,000, alpha = 0.05); the CI is estimate +/- critical *
    SE(original); the p-value is the share of replications with |t_i| at or
    above the observed |t|.
    """
    if dist.se is None:
        raise MissingPerReplicationSE(
            "bootstrap-t needs per-replication SEs; rebuild with se_kind set"
        )
    r = dist.replications
    if r < 1_000:
        raise TooFewReplications("bootstrap-t needs r >= 1,000 replications")
    _warn_low(r, PIVOTAL_REPLICATION_GUIDANCE, "bootstrap-t statistics")
    j = dist.coef_index(coef)
    if center == "null" and dist.null_coefficient != j:
        raise ConfigError("center='null' needs a distribution built under that null")

    abs_t = np.sort(np.abs(dist.t_draws(center)[:, j]))
    crit = float(abs_t[bootstrap_t_critical_index(r, alpha) - 1])

    est = float(fit.beta[j])
    se0 = float(math.sqrt(max(vcov.matrix[j, j], 0.0)))
    if se0 == 0.0:
        if est == null_value:
            t_obs = 0.0
        else:
            raise ZeroSE([j])
    else:
        t_obs = (est - null_value) / se0
    p = float(np.mean(abs_t >= abs(t_obs)))
    return BootstrapT(
        coefficient=dist.column_names[j],
        estimate=est,
        se=se0,
        t_observed=t_obs,
        critical_value=crit,
        p_value=p,
        ci_low=est - crit * se0,
        ci_high=est + crit * se0,
        center=center,
    )


# ---------------------------------------------------------------------------
# Randomization inference
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RIResult:
    """Randomization-inference p-value and the null distribution behind it.

    In exhaustive mode the realized assignment is one of the enumerated
    draws, so p >= 1/n_draws (Fisher convention). In Monte Carlo mode the
    p-value is the plain fraction of the r drawn reassignments at least as
    large in magnitude; the observed statistic is not re-added.
    """

    p_value: float
    observed: float
    null_distribution: np.ndarray
    exhaustive: bool
    n_draws: int
    n_degenerate_skipped: int
    assignment: str
    treated_count: int
    seed: int
    notes: tuple[str, ...] = ()


# Relative slack in |stat| comparisons so assignments that are algebraic
# mirror images of the observed one count symmetrically despite float noise.
_RI_TIE_SLACK = 1e-12


def _ri_pvalue(stats: np.ndarray, observed: float) -> float:
    thr = abs(observed) * (1.0 - _RI_TIE_SLACK)
    return float(np.mean(np.abs(stats) >= thr))


def randomization_inference(
    data: Dataset, plan: ResamplePlan, columns=None, *, n_workers: int = 1
) -> RIResult:
    """Re-randomize treatment under the sharp null and place the estimate.

    Keeps real outcomes, swaps the treatment assignment per the declared
    scheme (complete randomization with the observed treated count,
    cluster-level complete randomization, or Bernoulli), refits, and stores
    the treatment coefficient. Enumerates all assignments exactly when their
    number is at most ``plan.exhaustive_threshold`` (Bernoulli is always
    Monte Carlo: its assignments are not equiprobable).
    """
    if plan.scheme != RI:
        raise ConfigError(f"plan scheme is {plan.scheme!r}, expected {RI!r}")
    if data.treatment is None:
        raise NoTreatment("randomization inference needs a treatment column")

    fit = fit_ols(data, columns)
    if data.treatment_name not in fit.column_names:
        raise ConfigError("treatment column is not part of the fitted design")
    j = fit.column_names.index(data.treatment_name)
    t_obs = fit.design[:, j]
    n = fit.n

    keep = [c for c in range(fit.k) if c != j]
    Z = fit.design[:, keep]
    if Z.shape[1]:
        qz, _ = np.linalg.qr(Z)
    else:
        qz = np.zeros((n, 0))
    y_tilde = fit.outcome - qz @ (qz.T @ fit.outcome)

    # Projection roundoff leaves O(eps * |y|) noise in y_tilde; numerators
    # below this floor are true zeros (e.g. a constant outcome) and are
    # snapped so they compare as zeros instead of as noise.
    num_floor = 64.0 * np.finfo(np.float64).eps * n * max(
        float(np.max(np.abs(fit.outcome))), 1e-300
    )

    def stats_for(T: np.ndarray) -> np.ndarray:
        num = T @ y_tilde
        num[np.abs(num) <= num_floor] = 0.0
        qzt = T @ qz
        denom = T.sum(axis=1) - np.einsum("bj,bj->b", qzt, qzt)
        out = np.full(T.shape[0], np.nan)
        ok = denom > n * 1e-12
        np.divide(num, denom, out=out, where=ok)
        return out

    observed = float(stats_for(t_obs[None, :])[0])

    m1 = int(round(t_obs.sum()))
    if plan.assignment == COMPLETE:
        if not 0 < m1 < n:
            raise ConfigError("complete randomization needs 0 < treated count < n")
        total = math.comb(n, m1)
        exhaustive = total <= plan.exhaustive_threshold

        def draw_rows(rng):
            return rng.permutation(n)[:m1]

        def enumerate_rows():
            return combinations(range(n), m1)

    elif plan.assignment == CLUSTER_ASSIGNMENT:
        if plan.cluster_map is None:
            raise ConfigError("cluster assignment needs a cluster_map")
        labels = plan.cluster_map.labels
        n_clusters = plan.cluster_map.n_clusters
        cluster_rows = [np.flatnonzero(labels == c) for c in range(n_clusters)]
        treated_level = np.array([t_obs[rows][0] for rows in cluster_rows])
        for c, rows in enumerate(cluster_rows):
            if not np.all(t_obs[rows] == treated_level[c]):
                raise ConfigError(
                    "cluster assignment needs treatment constant within clusters"
                )
        m1c = int(treated_level.sum())
        if not 0 < m1c < n_clusters:
            raise ConfigError("cluster randomization needs 0 < treated clusters < C")
        total = math.comb(n_clusters, m1c)
        exhaustive = total <= plan.exhaustive_threshold

        def draw_rows(rng):
            chosen = rng.permutation(n_clusters)[:m1c]
            return np.concatenate([cluster_rows[c] for c in chosen])

        def enumerate_rows():
            for chosen in combinations(range(n_clusters), m1c):
                yield np.concatenate([cluster_rows[c] for c in chosen])

    else:  # BERNOULLI
        p = plan.bernoulli_p if plan.bernoulli_p is not None else m1 / n
        if not 0.0 < p < 1.0:
            raise ConfigError("Bernoulli assignment probability must be in (0, 1)")
        total = 0
        exhaustive = False

        def draw_rows(rng):
            return np.flatnonzero(rng.random(n) < p)

        enumerate_rows = None

    notes = []
    if exhaustive:
        stats = np.empty(total)
        buf = np.zeros((min(total, 4096), n))
        pos = 0
        filled = 0
        for rows in enumerate_rows():
            buf[filled, list(rows)] = 1.0
            filled += 1
            if filled == buf.shape[0]:
                stats[pos : pos + filled] = stats_for(buf[:filled])
                pos += filled
                buf[:] = 0.0
                filled = 0
        if filled:
            stats[pos : pos + filled] = stats_for(buf[:filled])
        notes.append("exhaustive enumeration; observed assignment included in the count")
        n_draws_total = total
    else:
        _warn_low(plan.replications, SE_REPLICATION_GUIDANCE, "Monte Carlo RI p-values")

        def run(start: int, stop: int):
            T = np.zeros((stop - start, n))
            pool = _SubstreamPool(plan.seed)
            for i in range(start, stop):
                T[i - start, draw_rows(pool.at(i))] = 1.0
            return stats_for(T)

        stats = np.concatenate(_parallel_ranges(plan.replications, n_workers, run))
        notes.append(
            "Monte Carlo reassignment; observed statistic not re-added to the draws"
        )
        n_draws_total = plan.replications

    valid = np.isfinite(stats)
    skipped = int(np.size(stats) - valid.sum())
    stats = stats[valid]
    if stats.size == 0:
        raise DegenerateResample("every reassignment was collinear with the controls")
    return RIResult(
        p_value=_ri_pvalue(stats, observed),
        observed=observed,
        null_distribution=stats,
        exhaustive=exhaustive,
        n_draws=int(stats.size),
        n_degenerate_skipped=skipped,
        assignment=plan.assignment,
        treated_count=m1,
        seed=plan.seed,
        notes=tuple(notes),
    )


# ---------------------------------------------------------------------------
# Joint-null replicate matrices for Westfall-Young / Romano-Wolf
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilyReplicates:
    """Observed statistics and an (r, m) replicate matrix under the joint null."""

    observed: np.ndarray
    statistics: np.ndarray
    hypothesis_ids: tuple[str, ...]
    scheme: str
    seed: int


def family_null_replicates(
    datasets,
    target,
    plan: ResamplePlan,
    columns=None,
    *,
    se_kind: str = "hc1",
    observed_vcov=None,
    n_workers: int = 1,
    ids=None,
) -> FamilyReplicates:
    """Replicate t statistics for a family of outcomes sharing one design.

    Wild/residual schemes impose the null ``target = 0`` per outcome and
    reuse the same per-replication draws across outcomes (the substream
    depends only on (seed, index)), preserving the dependence structure the
    step-down corrections exploit. For the ``ri`` scheme the same
    reassignments are applied to every outcome and the coefficient draws are
    standardized by each outcome's null spread.

    ``observed_vcov`` is a callable fit -> VcovEstimate for the observed
    statistics; default matches ``se_kind`` replicate studentization.
    """
    from . import vcov as vcov_mod

    if observed_vcov is None:
        if se_kind == "cluster":
            observed_vcov = lambda f: vcov_mod.vcov_cluster(f, plan.cluster_map)  # noqa: E731
        elif se_kind == "conventional":
            observed_vcov = vcov_mod.vcov_conventional
        else:
            observed_vcov = lambda f: vcov_mod.vcov_hc(f, se_kind)  # noqa: E731

    datasets = list(datasets)
    m = len(datasets)
    ids = tuple(ids) if ids is not None else tuple(f"h{o}" for o in range(m))
    observed = np.empty(m)
    cols_matrix = []

    if plan.scheme == RI:
        for o, d in enumerate(datasets):
            res = randomization_inference(d, plan, columns, n_workers=n_workers)
            spread = res.null_distribution.std()
            spread = spread if spread > 0 else 1.0
            observed[o] = res.observed / spread
            cols_matrix.append(res.null_distribution / spread)
        r_min = min(len(c) for c in cols_matrix)
        stats = np.column_stack([c[:r_min] for c in cols_matrix])
    elif plan.scheme in (WILD, WILD_CLUSTER, RESIDUAL):
        null_plan = ResamplePlan(
            scheme=plan.scheme,
            replications=plan.replications,
            seed=plan.seed,
            cluster_map=plan.cluster_map,
            wild_weights=plan.wild_weights,
            null_coefficient=target,
            null_value=0.0,
            exhaustive_threshold=plan.exhaustive_threshold,
        )
        runner = bootstrap_residual if plan.scheme == RESIDUAL else bootstrap_wild
        for o, d in enumerate(datasets):
            fit = fit_ols(d, columns)
            j = fit.coef_index(target)
            v = observed_vcov(fit)
            se0 = math.sqrt(max(v.matrix[j, j], 0.0))
            if se0 == 0.0:
                raise ZeroSE([j])
            observed[o] = fit.beta[j] / se0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", ReplicationCountWarning)
                dist = runner(d, null_plan, columns, se_kind=se_kind, n_workers=n_workers)
            cols_matrix.append(dist.t_draws(center="null")[:, j])
        stats = np.column_stack(cols_matrix)
    else:
        raise ConfigError(f"scheme {plan.scheme!r} cannot generate family replicates")

    return FamilyReplicates(
        observed=observed,
        statistics=stats,
        hypothesis_ids=ids,
        scheme=plan.scheme,
        seed=plan.seed,
    )
