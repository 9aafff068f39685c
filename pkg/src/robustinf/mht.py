"""Multiple-hypothesis-testing corrections over a family of p-values.

FWER: Bonferroni, Holm step-down, and the resampling-based Westfall-Young
and Romano-Wolf step-down procedures. FDR: Benjamini-Hochberg step-up and
the two-stage sharpened q-values. Adjusted p-values use the standard
monotone closures so any level can be applied downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MissingStatistics, ShapeMismatch

FWER = "FWER"
FDR = "FDR"


def familywise_error_rate(m: int, alpha: float) -> float:
    """Probability of at least one false rejection across m independent
    true nulls tested at level alpha: 1 - (1 - alpha)^m."""
    return 1.0 - (1.0 - alpha) ** m


@dataclass(frozen=True)
class Hypothesis:
    id: str
    raw_p: float
    statistic: float | None = None


@dataclass(frozen=True)
class PValueFamily:
    """A family of hypotheses tested together at level ``alpha``.

    ``dependence_source`` optionally carries an (r, m) matrix of null
    replicate statistics (column order matching the hypotheses) for the
    resampling-based corrections.
    """

    hypotheses: tuple[Hypothesis, ...]
    alpha: float = 0.05
    dependence_source: np.ndarray | None = None

    def __post_init__(self):
        if len(self.hypotheses) < 1:
            raise ShapeMismatch("family must contain at least one hypothesis")
        if not 0.0 < self.alpha < 1.0:
            raise ShapeMismatch("alpha must be in (0, 1)")
        for h in self.hypotheses:
            if not 0.0 <= h.raw_p <= 1.0:
                raise ShapeMismatch(f"raw p for {h.id!r} is outside [0, 1]")
        ids = [h.id for h in self.hypotheses]
        if len(set(ids)) != len(ids):
            raise ShapeMismatch("hypothesis ids must be unique")
        if self.dependence_source is not None:
            dep = np.asarray(self.dependence_source, dtype=np.float64)
            if dep.ndim != 2 or dep.shape[1] != len(self.hypotheses):
                raise ShapeMismatch("dependence_source must be an (r, m) matrix")
            object.__setattr__(self, "dependence_source", dep)

    @property
    def m(self) -> int:
        return len(self.hypotheses)

    @classmethod
    def from_p_values(cls, p_values, alpha: float = 0.05, ids=None,
                      statistics=None, dependence_source=None) -> "PValueFamily":
        p = list(p_values)
        ids = list(ids) if ids is not None else [f"h{i}" for i in range(len(p))]
        stats = list(statistics) if statistics is not None else [None] * len(p)
        hyps = tuple(
            Hypothesis(i, float(pv), None if s is None else float(s))
            for i, pv, s in zip(ids, p, stats)
        )
        return cls(hypotheses=hyps, alpha=alpha, dependence_source=dependence_source)


@dataclass(frozen=True)
class HypothesisResult:
    id: str
    raw_p: float
    adjusted_p: float
    rejected: bool


@dataclass(frozen=True)
class MHTReport:
    method: str
    error_rate_kind: str
    alpha: float
    results: tuple[HypothesisResult, ...]
    notes: tuple[str, ...] = ()

    def adjusted(self) -> dict[str, float]:
        return {r.id: r.adjusted_p for r in self.results}

    def rejected_ids(self) -> set[str]:
        return {r.id for r in self.results if r.rejected}


def _sorted_order(family: PValueFamily) -> list[int]:
    """Ascending by (raw p, id): the stable tie rule shared by all closures."""
    return sorted(range(family.m), key=lambda i: (family.hypotheses[i].raw_p,
                                                  family.hypotheses[i].id))


def bonferroni(family: PValueFamily) -> MHTReport:
    """Reject when raw p < alpha/m; adjusted p is min(1, m * p)."""
    m = family.m
    results = tuple(
        HypothesisResult(
            id=h.id,
            raw_p=h.raw_p,
            adjusted_p=min(1.0, m * h.raw_p),
            rejected=h.raw_p < family.alpha / m,
        )
        for h in family.hypotheses
    )
    return MHTReport("bonferroni", FWER, family.alpha, results)


def holm(family: PValueFamily) -> MHTReport:
    """Step-down: compare p_(i) to alpha/(m-i+1), stop at the first failure.

    Adjusted p-values are the running maximum of min(1, (m-i+1) p_(i)),
    which reproduces the step-down decisions at any level.
    """
    m = family.m
    order = _sorted_order(family)
    adjusted = np.empty(m)
    rejected = np.zeros(m, dtype=bool)
    running = 0.0
    alive = True
    for rank, i in enumerate(order):
        p = family.hypotheses[i].raw_p
        running = max(running, min(1.0, (m - rank) * p))
        adjusted[i] = running
        if alive and p < family.alpha / (m - rank):
            rejected[i] = True
        else:
            alive = False
    results = tuple(
        HypothesisResult(h.id, h.raw_p, float(adjusted[i]), bool(rejected[i]))
        for i, h in enumerate(family.hypotheses)
    )
    return MHTReport("holm", FWER, family.alpha, results)


def _stat_order(family: PValueFamily) -> tuple[np.ndarray, list[int]]:
    stats = []
    for h in family.hypotheses:
        if h.statistic is None:
            raise MissingStatistics(f"hypothesis {h.id!r} has no statistic")
        stats.append(abs(h.statistic))
    observed = np.array(stats)
    order = sorted(range(family.m), key=lambda i: (-observed[i],
                                                   family.hypotheses[i].id))
    return observed, order


def _replicates(family: PValueFamily, replicates) -> np.ndarray:
    dep = replicates if replicates is not None else family.dependence_source
    if dep is None:
        raise MissingStatistics("no replicate matrix supplied for the correction")
    dep = np.asarray(dep, dtype=np.float64)
    if dep.ndim != 2 or dep.shape[1] != family.m:
        raise ShapeMismatch("replicates must be an (r, m) matrix")
    return dep


def _maxt_adjusted(observed: np.ndarray, order: list[int], dep: np.ndarray) -> np.ndarray:
    """Step-down max-T adjusted p-values, monotone along the |t| order.

    For the hypothesis at step j, the adjusted p is the share of replicates
    whose maximum |statistic| over the still-active hypotheses (steps j..m)
    reaches the observed |statistic|.
    """
    a = np.abs(dep[:, order])
    suffix_max = np.maximum.accumulate(a[:, ::-1], axis=1)[:, ::-1]
    adjusted = np.empty(len(order))
    running = 0.0
    for step, i in enumerate(order):
        p = float(np.mean(suffix_max[:, step] >= observed[i]))
        running = max(running, p)
        adjusted[i] = running
    return adjusted


def _marginal_resampled_p(observed: np.ndarray, dep: np.ndarray) -> np.ndarray:
    return np.array(
        [float(np.mean(np.abs(dep[:, i]) >= observed[i])) for i in range(len(observed))]
    )


def westfall_young(family: PValueFamily, replicates=None) -> MHTReport:
    """Step-down max-T correction with bootstrap-estimated dependence.

    Replicates must be generated under the joint null (the resample module's
    family helper produces compliant matrices). Reported raw p-values are the
    resampled marginals, so adjusted >= raw holds by construction; rejection
    is adjusted p <= alpha.
    """
    dep = _replicates(family, replicates)
    observed, order = _stat_order(family)
    adjusted = _maxt_adjusted(observed, order, dep)
    raw = _marginal_resampled_p(observed, dep)
    results = tuple(
        HypothesisResult(h.id, float(raw[i]), float(adjusted[i]),
                         bool(adjusted[i] <= family.alpha))
        for i, h in enumerate(family.hypotheses)
    )
    return MHTReport(
        "westfall_young", FWER, family.alpha, results,
        notes=("max-T step-down over |statistics|; raw p are resampled marginals",),
    )


def romano_wolf(family: PValueFamily, replicates=None) -> MHTReport:
    """Studentized step-down with critical values from the non-rejected max.

    Replicates should be studentized statistics recentered at their own
    estimates. Rejection iterates: compute the (1-alpha) quantile of the max
    |statistic| over the active set, reject everything above it, and repeat
    until no further rejections. Adjusted p-values come from the same max-T
    scan as Westfall-Young (monotone along the step order).
    """
    dep = _replicates(family, replicates)
    observed, order = _stat_order(family)
    adjusted = _maxt_adjusted(observed, order, dep)
    raw = _marginal_resampled_p(observed, dep)

    r = dep.shape[0]
    crit_idx = max(int(np.ceil(r * (1.0 - family.alpha) - 1e-9)), 1) - 1
    active = list(order)
    rejected = np.zeros(family.m, dtype=bool)
    abs_dep = np.abs(dep)
    while active:
        max_active = abs_dep[:, active].max(axis=1)
        crit = np.sort(max_active)[crit_idx]
        newly = [i for i in active if observed[i] > crit]
        if not newly:
            break
        for i in newly:
            rejected[i] = True
        active = [i for i in active if not rejected[i]]

    results = tuple(
        HypothesisResult(h.id, float(raw[i]), float(adjusted[i]), bool(rejected[i]))
        for i, h in enumerate(family.hypotheses)
    )
    return MHTReport(
        "romano_wolf", FWER, family.alpha, results,
        notes=("iterated step-down over studentized statistics; "
               "raw p are resampled marginals",),
    )


def benjamini_hochberg(family: PValueFamily) -> MHTReport:
    """Step-up FDR control: reject ranks 1..i* where i* is the largest rank
    with p_(i) <= (i/m) alpha. q-values use the monotone min-form
    min_{l >= i} (m/l) p_(l)."""
    m = family.m
    order = _sorted_order(family)
    p_sorted = np.array([family.hypotheses[i].raw_p for i in order])
    ranks = np.arange(1, m + 1)
    passes = p_sorted <= ranks / m * family.alpha
    i_star = int(np.max(np.flatnonzero(passes)) + 1) if passes.any() else 0
    q_sorted = np.minimum.accumulate((m / ranks * p_sorted)[::-1])[::-1]
    q_sorted = np.minimum(q_sorted, 1.0)

    q = np.empty(m)
    rejected = np.zeros(m, dtype=bool)
    for rank, i in enumerate(order):
        q[i] = q_sorted[rank]
        rejected[i] = rank < i_star
    results = tuple(
        HypothesisResult(h.id, h.raw_p, float(q[i]), bool(rejected[i]))
        for i, h in enumerate(family.hypotheses)
    )
    return MHTReport("benjamini_hochberg", FDR, family.alpha, results)


def _bh_rejections(p_sorted: np.ndarray, level: float) -> int:
    """Number of step-up rejections of sorted p-values at the given level."""
    m = p_sorted.shape[0]
    passes = p_sorted <= np.arange(1, m + 1) / m * level
    return int(np.max(np.flatnonzero(passes)) + 1) if passes.any() else 0


def _two_stage_rejections(p_sorted: np.ndarray, alpha: float) -> int:
    """Sharpened two-stage rejection count on sorted p-values.

    Stage 1 runs step-up at alpha' = alpha/(1+alpha); stage 2 reruns it at
    alpha' * m/(m - r1) using the stage-1 rejection count r1.
    """
    m = p_sorted.shape[0]
    stage1_level = alpha / (1.0 + alpha)
    r1 = _bh_rejections(p_sorted, stage1_level)
    if r1 == 0:
        return 0
    if r1 == m:
        return m
    return _bh_rejections(p_sorted, stage1_level * m / (m - r1))


# Grid resolution for the smallest-alpha search defining sharpened q-values.
BKY_Q_RESOLUTION = 1e-4


def bky_sharpened(family: PValueFamily) -> MHTReport:
    """Two-stage sharpened q-values.

    The sharpened q-value of a hypothesis is the smallest level (to a grid
    of ``BKY_Q_RESOLUTION``) at which the two-stage procedure rejects it,
    found by bisection over the grid; rejection sets are nested in alpha, so
    the search is exact to the resolution. With many true rejections the
    stage-2 level exceeds alpha and sharpened q-values can drop below raw
    p-values.
    """
    m = family.m
    order = _sorted_order(family)
    p_sorted = np.array([family.hypotheses[i].raw_p for i in order])

    n_grid = int(round(1.0 / BKY_Q_RESOLUTION))
    cache: dict[int, int] = {}

    def reject_count(grid_idx: int) -> int:
        if grid_idx not in cache:
            cache[grid_idx] = _two_stage_rejections(p_sorted, grid_idx * BKY_Q_RESOLUTION)
        return cache[grid_idx]

    q = np.empty(m)
    for rank in range(m):
        # smallest grid level whose rejection count covers this rank
        if reject_count(n_grid) <= rank:
            q_rank = 1.0
        else:
            lo, hi = 1, n_grid
            while lo < hi:
                mid = (lo + hi) // 2
                if reject_count(mid) > rank:
                    hi = mid
                else:
                    lo = mid + 1
            q_rank = lo * BKY_Q_RESOLUTION
        q[order[rank]] = min(q_rank, 1.0)

    n_reject = _two_stage_rejections(p_sorted, family.alpha)
    rejected = np.zeros(m, dtype=bool)
    for rank in range(n_reject):
        rejected[order[rank]] = True
    results = tuple(
        HypothesisResult(h.id, h.raw_p, float(q[i]), bool(rejected[i]))
        for i, h in enumerate(family.hypotheses)
    )
    return MHTReport(
        "bky_sharpened", FDR, family.alpha, results,
        notes=(f"sharpened q-values on a {BKY_Q_RESOLUTION} level grid",),
    )


METHODS = {
    "bonferroni": bonferroni,
    "holm": holm,
    "westfall_young": westfall_young,
    "wy": westfall_young,
    "romano_wolf": romano_wolf,
    "rw": romano_wolf,
    "benjamini_hochberg": benjamini_hochberg,
    "bh": benjamini_hochberg,
    "bky": bky_sharpened,
}
