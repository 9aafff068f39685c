"""Standard errors, t-statistics, p-values, and confidence intervals.

The reference distribution is always Student-t with the degrees of freedom
carried by the variance estimate, so Satterthwaite-corrected and
cluster-count dof flow through without special cases.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import ShapeMismatch, ZeroSE
from .regression import FitResult
from .vcov import MAX_SE, VcovEstimate

TWO_SIDED = "two-sided"
GREATER = "greater"
LESS = "less"


@dataclass(frozen=True)
class CoefficientTest:
    name: str
    estimate: float
    se: float
    statistic: float
    dof: float
    p_value: float
    ci_low: float
    ci_high: float


@dataclass(frozen=True)
class TestReport:
    """Per-coefficient inference plus method provenance and diagnostics."""

    coefficients: tuple[CoefficientTest, ...]
    vcov_kind: str
    reference_distribution: str
    alpha: float
    alternative: str
    diagnostics: dict = field(default_factory=dict)
    notes: tuple[str, ...] = ()

    def coefficient(self, name: str) -> CoefficientTest:
        for c in self.coefficients:
            if c.name == name:
                return c
        raise KeyError(name)


def t_tests(
    fit: FitResult,
    vcov: VcovEstimate,
    alpha: float = 0.05,
    *,
    alternative: str = TWO_SIDED,
) -> TestReport:
    """Student-t tests of each coefficient against zero.

    Uses the per-coefficient dof stored on the variance estimate. An exactly
    zero SE with a zero estimate reports p = 1 (a degenerate but harmless
    test); a zero SE with a nonzero estimate raises :class:`ZeroSE` rather
    than fabricating p = 0.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if alternative not in (TWO_SIDED, GREATER, LESS):
        raise ValueError(f"unknown alternative {alternative!r}")
    if vcov.matrix.shape[0] != fit.k:
        raise ShapeMismatch("variance estimate does not match the fit")

    se = vcov.se
    est = fit.beta
    degenerate = se == 0.0
    bad = np.flatnonzero(degenerate & (est != 0.0))
    if bad.size:
        raise ZeroSE(bad)

    rows = []
    for j, name in enumerate(fit.column_names):
        dof = float(vcov.dof[j])
        if degenerate[j]:
            rows.append(
                CoefficientTest(name, float(est[j]), 0.0, 0.0, dof, 1.0, 0.0, 0.0)
            )
            continue
        stat = float(est[j] / se[j])
        if alternative == TWO_SIDED:
            p = 2.0 * float(stats.t.sf(abs(stat), dof))
            crit = float(stats.t.ppf(1.0 - alpha / 2.0, dof))
            lo, hi = est[j] - crit * se[j], est[j] + crit * se[j]
        elif alternative == GREATER:
            p = float(stats.t.sf(stat, dof))
            crit = float(stats.t.ppf(1.0 - alpha, dof))
            lo, hi = est[j] - crit * se[j], np.inf
        else:
            p = float(stats.t.cdf(stat, dof))
            crit = float(stats.t.ppf(1.0 - alpha, dof))
            lo, hi = -np.inf, est[j] + crit * se[j]
        rows.append(
            CoefficientTest(
                name, float(est[j]), float(se[j]), stat, dof,
                min(p, 1.0), float(lo), float(hi),
            )
        )

    diagnostics = {
        "max_leverage": float(fit.leverage.max()),
        "infeasible_rows": list(vcov.infeasible_obs),
        "cluster_counts": dict(vcov.cluster_counts or {}),
        "eigenvalue_fix": vcov.eigenvalue_fix,
    }
    return TestReport(
        coefficients=tuple(rows),
        vcov_kind=vcov.kind,
        reference_distribution="student_t",
        alpha=alpha,
        alternative=alternative,
        diagnostics=diagnostics,
        notes=vcov.notes,
    )


def max_se_heuristic(conv: VcovEstimate, robust: VcovEstimate) -> VcovEstimate:
    """Per-coefficient maximum of the conventional and robust variances.

    The diagonal takes the elementwise max; off-diagonals are copied from
    the robust matrix (a documented limitation flagged in the notes). The
    per-coefficient dof follows whichever estimate supplied the diagonal
    entry.
    """
    if conv.matrix.shape != robust.matrix.shape:
        raise ShapeMismatch("estimates have different shapes")
    conv_d = np.diag(conv.matrix)
    rob_d = np.diag(robust.matrix)
    take_conv = conv_d > rob_d
    out = np.array(robust.matrix)
    np.fill_diagonal(out, np.where(take_conv, conv_d, rob_d))
    dof = np.where(take_conv, conv.dof, robust.dof)
    return VcovEstimate(
        matrix=out,
        kind=MAX_SE,
        dof=dof,
        cluster_counts=robust.cluster_counts,
        infeasible_obs=robust.infeasible_obs,
        notes=robust.notes + (
            f"diagonal is max({conv.kind}, {robust.kind}); off-diagonals from {robust.kind}",
        ),
    )
