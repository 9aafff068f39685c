"""OLS core: worked examples, invariants, and the normal-equations oracle."""

import numpy as np
import pytest

import robustinf as ri
from robustinf.errors import RankDeficient, TooFewRows


def test_exact_linear_data_recovers_coefficients():
    X = np.array([[1.0, 0.0], [1.0, 1.0], [1.0, 2.0]])
    y = X @ np.array([2.0, 3.0])
    ds = ri.Dataset(outcome=y, covariates=X, column_names=("const", "x"))
    fit = ri.fit_ols(ds)
    np.testing.assert_allclose(fit.beta, [2.0, 3.0], atol=1e-12)
    np.testing.assert_allclose(fit.residuals, 0.0, atol=1e-12)
    assert fit.sigma2_hat == pytest.approx(0.0, abs=1e-24)


def test_intercept_only_mean_and_leverage():
    ds = ri.build_dataset([1.0, 2.0, 3.0], np.empty((3, 0)), [])
    fit = ri.fit_ols(ds)
    assert fit.beta[0] == pytest.approx(2.0)
    np.testing.assert_allclose(fit.leverage, 1.0 / 3.0, atol=1e-12)
    assert fit.leverage.sum() == pytest.approx(1.0, abs=1e-12)


def test_seeded_design_matches_normal_equations_oracle():
    rng = np.random.default_rng(20240917)
    n, k = 200, 4
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k - 1))])
    beta_true = np.array([1.0, -2.0, 0.5, 3.0])
    y = X @ beta_true + rng.normal(size=n)
    ds = ri.Dataset(outcome=y, covariates=X, column_names=("const", "a", "b", "c"))
    fit = ri.fit_ols(ds)

    beta_oracle = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(fit.beta, beta_oracle, atol=1e-10)

    analytic_se = np.sqrt(np.diag(fit.sigma2_hat * np.linalg.inv(X.T @ X)))
    assert np.all(np.abs(fit.beta - beta_true) < 3.0 * analytic_se)


def test_rank_deficient_names_offending_columns():
    rng = np.random.default_rng(5)
    x = rng.normal(size=30)
    X = np.column_stack([np.ones(30), x, 2.0 * x])
    ds = ri.Dataset(outcome=rng.normal(size=30), covariates=X,
                    column_names=("const", "x", "x_double"))
    with pytest.raises(RankDeficient) as err:
        ri.fit_ols(ds)
    assert err.value.rank == 2
    assert set(err.value.columns) & {"x", "x_double"}


def test_too_few_rows():
    ds = ri.build_dataset([1.0, 2.0], [[1.0], [2.0]], ["x"])
    with pytest.raises(TooFewRows):
        ri.fit_ols(ds)


def test_leverage_intercept_only_quarter():
    ds = ri.build_dataset([1.0, 4.0, 2.0, 3.0], np.empty((4, 0)), [])
    fit = ri.fit_ols(ds)
    np.testing.assert_allclose(ri.leverage(fit), 0.25, atol=1e-12)


def test_one_hot_dummy_forces_leverage_one():
    rng = np.random.default_rng(11)
    n = 12
    dummy = np.zeros(n)
    dummy[4] = 1.0
    X = np.column_stack([rng.normal(size=n), dummy])
    ds = ri.build_dataset(rng.normal(size=n), X, ["x", "only_row4"])
    fit = ri.fit_ols(ds)
    assert fit.leverage[4] == pytest.approx(1.0, abs=1e-10)
    assert list(ri.leverage_infeasible_rows(fit)) == [4]


def test_two_group_leverage_closed_form():
    # group-mean model: h_ii = 1/n_g, verified against the direct hat matrix
    n0 = n1 = 10
    t = np.r_[np.zeros(n0), np.ones(n1)]
    rng = np.random.default_rng(3)
    y = rng.normal(size=n0 + n1)
    ds = ri.build_dataset(y, t[:, None], ["t"])
    fit = ri.fit_ols(ds)
    np.testing.assert_allclose(fit.leverage, 1.0 / 10.0, atol=1e-12)
    X = fit.design
    hat = X @ np.linalg.inv(X.T @ X) @ X.T
    np.testing.assert_allclose(fit.leverage, np.diag(hat), atol=1e-10)


@pytest.mark.parametrize("seed", range(8))
def test_properties_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 50))
    k = int(rng.integers(1, 5))
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
    y = rng.normal(size=n)
    names = tuple(["const"] + [f"x{j}" for j in range(k)])
    ds = ri.Dataset(outcome=y, covariates=X, column_names=names)
    fit = ri.fit_ols(ds)

    # leverage sum == k
    assert abs(fit.leverage.sum() - fit.k) < 1e-8
    assert np.all(fit.leverage >= 0.0) and np.all(fit.leverage <= 1.0)
    # residual orthogonality
    assert np.max(np.abs(X.T @ fit.residuals)) < 1e-8 * max(np.max(np.abs(y)), 1.0)
    # oracle equivalence
    np.testing.assert_allclose(
        fit.beta, np.linalg.solve(X.T @ X, X.T @ y), atol=1e-8
    )
    # bread symmetric
    assert np.max(np.abs(fit.bread - fit.bread.T)) < 1e-10


def test_scale_equivariance():
    rng = np.random.default_rng(9)
    n = 40
    X = rng.normal(size=(n, 2))
    y = rng.normal(size=n)
    ds = ri.build_dataset(y, X, ["a", "b"])
    fit = ri.fit_ols(ds)

    c = 3.7
    Xs = X.copy()
    Xs[:, 1] *= c
    ds_s = ri.build_dataset(y, Xs, ["a", "b"])
    fit_s = ri.fit_ols(ds_s)

    assert fit_s.beta[2] == pytest.approx(fit.beta[2] / c, rel=1e-8)
    np.testing.assert_allclose(fit_s.fitted, fit.fitted, atol=1e-8)
    np.testing.assert_allclose(fit_s.leverage, fit.leverage, atol=1e-8)
