"""Variance estimators against hand cases and explicit-loop oracles."""

import numpy as np
import pytest
import scipy.linalg

import robustinf as ri
from robustinf.errors import LeverageInfeasible, SingleCluster
from robustinf.vcov import ClusterMap, intersection_clusters


def _fit(y, X, names):
    ds = ri.Dataset(outcome=np.asarray(y, float), covariates=np.asarray(X, float),
                    column_names=tuple(names))
    return ri.fit_ols(ds)


def _loop_meat(X, weights):
    k = X.shape[1]
    meat = np.zeros((k, k))
    for i in range(X.shape[0]):
        meat += weights[i] * np.outer(X[i], X[i])
    return meat


# ---------------------------------------------------------------------------
# conventional
# ---------------------------------------------------------------------------


def test_conventional_zero_residuals():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    fit = _fit(X @ [1.0, 2.0], X, ("const", "x"))
    v = ri.vcov_conventional(fit)
    np.testing.assert_allclose(v.matrix, 0.0, atol=1e-20)


def test_conventional_two_point_hand_case():
    fit = _fit([0.0, 2.0], np.ones((2, 1)), ("const",))
    assert fit.sigma2_hat == pytest.approx(2.0)
    v = ri.vcov_conventional(fit)
    assert v.matrix[0, 0] == pytest.approx(1.0)
    assert v.dof[0] == 1.0


def test_conventional_matches_textbook_formula():
    rng = np.random.default_rng(101)
    n, k = 100, 3
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    y = X @ [0.5, 1.0, -1.0] + rng.normal(size=n)
    fit = _fit(y, X, ("const", "a", "b"))
    v = ri.vcov_conventional(fit)
    resid = y - X @ np.linalg.solve(X.T @ X, X.T @ y)
    oracle = (resid @ resid) / (n - k) * np.linalg.inv(X.T @ X)
    np.testing.assert_allclose(v.matrix, oracle, atol=1e-10)


# ---------------------------------------------------------------------------
# HC family
# ---------------------------------------------------------------------------


def test_hc1_is_scaled_hc0():
    rng = np.random.default_rng(42)
    n, k = 100, 5
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    y = rng.normal(size=n)
    fit = _fit(y, X, tuple(f"c{i}" for i in range(k)))
    hc0 = ri.vcov_hc(fit, "hc0")
    hc1 = ri.vcov_hc(fit, "hc1")
    np.testing.assert_allclose(hc1.matrix, (100 / 95) * hc0.matrix, rtol=1e-14)


def test_equal_leverage_makes_hc1_equal_hc2():
    # Hadamard columns give every row identical leverage k/N exactly
    H = scipy.linalg.hadamard(8).astype(float)
    X = H[:, :3]
    rng = np.random.default_rng(1)
    y = rng.normal(size=8)
    fit = _fit(y, X, ("const", "h1", "h2"))
    np.testing.assert_allclose(fit.leverage, 3.0 / 8.0, atol=1e-12)
    hc1 = ri.vcov_hc(fit, "hc1")
    hc2 = ri.vcov_hc(fit, "hc2")
    np.testing.assert_allclose(hc1.matrix, hc2.matrix, atol=1e-12)


def test_hc_ladder_and_loop_oracle_heteroskedastic():
    rng = np.random.default_rng(7)
    n = 60
    x = rng.normal(size=n)
    sigma = np.abs(x) + 0.2
    y = 1.0 + 2.0 * x + sigma * rng.normal(size=n)
    fit = _fit(y, np.column_stack([np.ones(n), x]), ("const", "x"))

    e2 = fit.residuals**2
    h = fit.leverage
    oracles = {
        "hc0": e2,
        "hc1": e2 * n / (n - 2),
        "hc2": e2 / (1 - h),
        "hc3": e2 / (1 - h) ** 2,
    }
    mats = {}
    for kind, w in oracles.items():
        v = ri.vcov_hc(fit, kind)
        oracle = fit.bread @ _loop_meat(fit.design, w) @ fit.bread
        np.testing.assert_allclose(v.matrix, oracle, atol=1e-14)
        mats[kind] = v.matrix
    d0, d2, d3 = (np.diag(mats[k]) for k in ("hc0", "hc2", "hc3"))
    assert np.all(d3 >= d2 - 1e-15) and np.all(d2 >= d0 - 1e-15)
    assert np.all(np.diag(mats["hc1"]) >= d0 - 1e-15)


def test_hc2_hc3_refuse_leverage_one():
    rng = np.random.default_rng(2)
    n = 10
    dummy = np.zeros(n)
    dummy[3] = 1.0
    X = np.column_stack([np.ones(n), rng.normal(size=n), dummy])
    fit = _fit(rng.normal(size=n), X, ("const", "x", "d3"))
    for kind in ("hc2", "hc3"):
        with pytest.raises(LeverageInfeasible) as err:
            ri.vcov_hc(fit, kind)
        assert err.value.indices == [3]
    # HC0/HC1 still run but record the rows
    assert ri.vcov_hc(fit, "hc1").infeasible_obs == (3,)
    with pytest.raises(LeverageInfeasible):
        ri.vcov_bm(fit)


# ---------------------------------------------------------------------------
# Bell-McCaffrey
# ---------------------------------------------------------------------------


def _welch_oracle(y0, y1):
    n0, n1 = len(y0), len(y1)
    s0, s1 = y0.var(ddof=1), y1.var(ddof=1)
    se2 = s0 / n0 + s1 / n1
    dof = se2**2 / ((s0 / n0) ** 2 / (n0 - 1) + (s1 / n1) ** 2 / (n1 - 1))
    return np.sqrt(se2), dof


def _two_sample(y0, y1):
    y = np.concatenate([y0, y1])
    t = np.r_[np.zeros(len(y0)), np.ones(len(y1))]
    return _fit(y, np.column_stack([np.ones(len(y)), t]), ("const", "t"))


def test_bm_balanced_equal_variance_near_pooled_dof():
    rng = np.random.default_rng(31)
    y0 = rng.normal(0, 1, 12)
    y1 = rng.normal(0, 1, 12)
    bm = ri.vcov_bm(_two_sample(y0, y1))
    assert bm.dof[1] == pytest.approx(22.0, abs=2.5)


def test_bm_unbalanced_dof_shrinks_below_pooled():
    rng = np.random.default_rng(32)
    y0 = rng.normal(0, 1, 3)
    y1 = rng.normal(0, 1, 27)
    bm = ri.vcov_bm(_two_sample(y0, y1))
    assert bm.dof[1] < 28.0


def test_bm_matches_welch_closed_form():
    rng = np.random.default_rng(33)
    for _ in range(10):
        n0 = int(rng.integers(3, 25))
        n1 = int(rng.integers(3, 25))
        y0 = rng.normal(0, rng.uniform(0.3, 3.0), n0)
        y1 = rng.normal(1, rng.uniform(0.3, 3.0), n1)
        bm = ri.vcov_bm(_two_sample(y0, y1))
        se_w, dof_w = _welch_oracle(y0, y1)
        assert np.sqrt(bm.matrix[1, 1]) == pytest.approx(se_w, abs=1e-10)
        assert bm.dof[1] == pytest.approx(dof_w, abs=1e-6)


def test_bm_decisions_match_conventional_when_homoskedastic_balanced():
    rng = np.random.default_rng(34)
    n0 = n1 = 15
    noise0 = rng.normal(0, 1, n0)
    noise1 = rng.normal(0, 1, n1)
    for effect in np.linspace(0.0, 2.0, 9):
        fit = _two_sample(noise0, noise1 + effect)
        conv = ri.t_tests(fit, ri.vcov_conventional(fit), 0.05)
        bm = ri.t_tests(fit, ri.vcov_bm(fit), 0.05)
        assert (conv.coefficient("t").p_value < 0.05) == (
            bm.coefficient("t").p_value < 0.05
        )


# ---------------------------------------------------------------------------
# cluster / multiway
# ---------------------------------------------------------------------------


def _random_fit(rng, n, k):
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    y = rng.normal(size=n)
    return _fit(y, X, tuple(f"c{i}" for i in range(k)))


def test_singleton_clusters_with_unit_factor_equal_hc0():
    rng = np.random.default_rng(55)
    fit = _random_fit(rng, 40, 3)
    singletons = ClusterMap("each_row", np.arange(40), 40)
    v = ri.vcov_cluster(fit, singletons, small_sample=False)
    hc0 = ri.vcov_hc(fit, "hc0")
    np.testing.assert_allclose(v.matrix, hc0.matrix, atol=1e-12)


def test_cluster_partition_dummy_gives_zero_variance():
    # two clusters exactly partition a two-level dummy: scores vanish
    rng = np.random.default_rng(56)
    n = 30
    d = np.r_[np.zeros(15), np.ones(15)]
    y = rng.normal(size=n)
    fit = _fit(y, np.column_stack([np.ones(n), d]), ("const", "d"))
    cm = ClusterMap("half", d.astype(np.int64), 2)
    v = ri.vcov_cluster(fit, cm)
    assert v.matrix[1, 1] == pytest.approx(0.0, abs=1e-16)


def test_cluster_matches_loop_oracle_and_beats_hc1_on_cluster_shock():
    rng = np.random.default_rng(57)
    n_clusters, per = 50, 8
    n = n_clusters * per
    labels = np.repeat(np.arange(n_clusters), per)
    treat = (labels % 2 == 0).astype(float)
    shock = rng.normal(0, 1.0, n_clusters)[labels]
    y = 0.5 * treat + shock + rng.normal(0, 0.5, n)
    fit = _fit(y, np.column_stack([np.ones(n), treat]), ("const", "treat"))
    cm = ClusterMap("g", labels, n_clusters)
    v = ri.vcov_cluster(fit, cm)

    a = (n_clusters / (n_clusters - 1)) * ((n - 1) / (n - 2))
    meat = np.zeros((2, 2))
    for c in range(n_clusters):
        rows = labels == c
        s = fit.design[rows].T @ fit.residuals[rows]
        meat += np.outer(s, s)
    oracle = fit.bread @ (a * meat) @ fit.bread
    np.testing.assert_allclose(v.matrix, oracle, atol=1e-10)
    assert v.dof[0] == n_clusters - 1

    hc1 = ri.vcov_hc(fit, "hc1")
    assert v.matrix[1, 1] > hc1.matrix[1, 1]


def test_single_cluster_rejected():
    with pytest.raises(SingleCluster):
        ClusterMap("one", np.zeros(10, dtype=np.int64), 1)


def test_multiway_singleton_second_dimension_reduces_to_oneway():
    rng = np.random.default_rng(58)
    n = 48
    fit = _random_fit(rng, n, 3)
    dim_a = ClusterMap("g", np.repeat(np.arange(8), 6), 8)
    dim_b = ClusterMap("rows", np.arange(n), n)
    two = ri.vcov_multiway(fit, dim_a, dim_b)
    one = ri.vcov_cluster(fit, dim_a)
    np.testing.assert_allclose(two.matrix, one.matrix, atol=1e-10)


def test_multiway_same_dimension_is_idempotent():
    rng = np.random.default_rng(59)
    fit = _random_fit(rng, 36, 2)
    dim = ClusterMap("g", np.repeat(np.arange(6), 6), 6)
    two = ri.vcov_multiway(fit, dim, dim)
    one = ri.vcov_cluster(fit, dim)
    np.testing.assert_allclose(two.matrix, one.matrix, atol=1e-10)


def test_multiway_panel_matches_three_term_oracle():
    rng = np.random.default_rng(60)
    n_groups, n_periods = 50, 10
    g = np.repeat(np.arange(n_groups), n_periods)
    t = np.tile(np.arange(n_periods), n_groups)
    treat = (g % 2 == 0).astype(float)
    # AR(1)-ish serial correlation within group plus time shocks
    eps = np.empty(n_groups * n_periods)
    for i in range(n_groups):
        e = rng.normal(size=n_periods)
        for s in range(1, n_periods):
            e[s] += 0.6 * e[s - 1]
        eps[i * n_periods : (i + 1) * n_periods] = e
    y = 0.3 * treat + rng.normal(0, 0.5, n_periods)[t] + eps
    fit = _fit(y, np.column_stack([np.ones(len(y)), treat]), ("const", "treat"))

    dim_g = ClusterMap("group", g, n_groups)
    dim_t = ClusterMap("time", t, n_periods)
    two = ri.vcov_multiway(fit, dim_g, dim_t)

    oracle = (
        ri.vcov_cluster(fit, dim_g).matrix
        + ri.vcov_cluster(fit, dim_t).matrix
        - ri.vcov_cluster(fit, intersection_clusters(dim_g, dim_t)).matrix
    )
    if two.eigenvalue_fix:
        vals, vecs = np.linalg.eigh((oracle + oracle.T) / 2)
        oracle = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    np.testing.assert_allclose(two.matrix, oracle, atol=1e-10)
    assert two.dof[0] == min(n_groups, n_periods) - 1


def test_multiway_eigenvalue_repair_keeps_matrices_psd():
    # small crossed designs are where the add/subtract construction goes
    # indefinite; the repair must leave every result PSD
    repaired = 0
    for seed in range(60):
        r = np.random.default_rng(seed)
        n = 12
        X = np.column_stack([np.ones(n), r.normal(size=n)])
        y = r.normal(size=n)
        fit = _fit(y, X, ("const", "x"))
        labels_a = r.integers(0, 3, n)
        labels_b = r.integers(0, 3, n)
        if len(set(labels_a)) < 3 or len(set(labels_b)) < 3:
            continue
        dim_a = ClusterMap("a", labels_a.astype(np.int64), 3)
        dim_b = ClusterMap("b", labels_b.astype(np.int64), 3)
        v = ri.vcov_multiway(fit, dim_a, dim_b)
        repaired += int(v.eigenvalue_fix)
        assert np.linalg.eigvalsh(v.matrix).min() >= -1e-12
        assert np.all(np.diag(v.matrix) >= -1e-15)
    assert repaired > 0  # the fixture family does exercise the repair path


# ---------------------------------------------------------------------------
# effective clusters
# ---------------------------------------------------------------------------


def test_effective_clusters_balanced_equals_count():
    rng = np.random.default_rng(70)
    labels = np.repeat(np.arange(20), 5)
    y = rng.normal(size=100)
    fit = _fit(y, np.ones((100, 1)), ("const",))
    cm = ClusterMap("g", labels, 20)
    assert ri.effective_clusters(fit, cm, 0) == pytest.approx(20.0, abs=1e-12)


def test_effective_clusters_decreases_with_giant_cluster():
    rng = np.random.default_rng(71)
    c = 10
    values = []
    for giant in (10, 30, 60, 100):
        sizes = [giant] + [3] * (c - 1)
        labels = np.repeat(np.arange(c), sizes)
        n = labels.size
        fit = _fit(rng.normal(size=n), np.ones((n, 1)), ("const",))
        cm = ClusterMap("g", labels, c)
        values.append(ri.effective_clusters(fit, cm, 0))
    assert all(1.0 < v <= c for v in values)
    assert all(values[i] > values[i + 1] for i in range(len(values) - 1))
    assert values[-1] < c / 2


def test_effective_clusters_duplication_doubles():
    rng = np.random.default_rng(72)
    sizes = [4, 9, 2, 7, 5]
    labels = np.repeat(np.arange(5), sizes)
    n = labels.size
    x = rng.normal(size=n)
    fit = _fit(rng.normal(size=n), np.column_stack([np.ones(n), x]), ("const", "x"))
    cm = ClusterMap("g", labels, 5)
    g_one = ri.effective_clusters(fit, cm, 1)

    labels2 = np.concatenate([labels, labels + 5])
    x2 = np.concatenate([x, x])
    y2 = np.concatenate([fit.outcome, fit.outcome])
    fit2 = _fit(y2, np.column_stack([np.ones(2 * n), x2]), ("const", "x"))
    cm2 = ClusterMap("g", labels2, 10)
    g_two = ri.effective_clusters(fit2, cm2, 1)
    assert g_two == pytest.approx(2.0 * g_one, rel=1e-9)


# ---------------------------------------------------------------------------
# shared matrix properties
# ---------------------------------------------------------------------------


def test_permutation_invariance_of_estimators():
    rng = np.random.default_rng(80)
    n = 45
    X = np.column_stack([np.ones(n), rng.normal(size=(n, 2))])
    y = rng.normal(size=n)
    labels = rng.integers(0, 5, n).astype(np.int64)
    perm = rng.permutation(n)

    fit = _fit(y, X, ("const", "a", "b"))
    fit_p = _fit(y[perm], X[perm], ("const", "a", "b"))
    cm = ClusterMap("g", labels, 5)
    cm_p = ClusterMap("g", labels[perm], 5)

    for kind in ("hc0", "hc1", "hc2", "hc3"):
        np.testing.assert_allclose(
            ri.vcov_hc(fit, kind).matrix, ri.vcov_hc(fit_p, kind).matrix, atol=1e-12
        )
    np.testing.assert_allclose(
        ri.vcov_cluster(fit, cm).matrix, ri.vcov_cluster(fit_p, cm_p).matrix, atol=1e-12
    )
    np.testing.assert_allclose(
        ri.vcov_conventional(fit).matrix, ri.vcov_conventional(fit_p).matrix, atol=1e-12
    )


def test_symmetry_and_nonnegative_diagonals_everywhere():
    rng = np.random.default_rng(81)
    for seed in range(20):
        r = np.random.default_rng(seed)
        n = int(r.integers(20, 80))
        X = np.column_stack([np.ones(n), r.normal(size=(n, 2))])
        y = r.normal(size=n)
        fit = _fit(y, X, ("const", "a", "b"))
        labels = np.arange(n) % 6
        cm = ClusterMap("g", labels, 6)
        ests = [
            ri.vcov_conventional(fit),
            ri.vcov_hc(fit, "hc0"),
            ri.vcov_hc(fit, "hc3"),
            ri.vcov_bm(fit),
            ri.vcov_cluster(fit, cm),
        ]
        for est in ests:
            assert np.max(np.abs(est.matrix - est.matrix.T)) < 1e-10
            assert np.all(np.diag(est.matrix) >= 0.0)
            assert np.all(est.dof > 0)
