"""Compiled-vs-NumPy kernel equivalence.

The two backends share draw generation and singularity thresholds; results
agree to floating-point reordering. Bit-level determinism contracts are
per-backend and are covered in test_resample / test_acceptance.
"""

import warnings

import numpy as np
import pytest

import robustinf as ri
from robustinf import _kernels_py
from robustinf._backend import has_compiled, kernels, set_backend
from robustinf.errors import ReplicationCountWarning

pytestmark = pytest.mark.skipif(
    not has_compiled(), reason="compiled kernels not built in this install"
)


@pytest.fixture
def both_backends():
    before = ri.backend_name()
    yield
    set_backend(before)


def _quiet(fn, *args, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ReplicationCountWarning)
        return fn(*args, **kw)


def _fixture(seed=0, n=50, k=3):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, k - 1))
    y = 1.0 + X @ np.arange(1, k) + rng.normal(size=n)
    labels = (np.arange(n) % 7).astype(np.int64)
    return ri.build_dataset(y, X, [f"x{j}" for j in range(1, k)],
                            cluster_labels={"g": labels}), labels


def test_pairs_core_parity_all_se_kinds():
    data, _ = _fixture()
    fit = ri.fit_ols(data)
    rng = np.random.default_rng(1)
    idx = rng.integers(0, fit.n, (200, fit.n)).astype(np.int64)
    from robustinf import _kernels

    for code in range(6):
        b_py, s_py, g_py = _kernels_py.pairs_core(fit.design, fit.outcome, idx, code)
        b_c, s_c, g_c = _kernels.pairs_core(fit.design, fit.outcome, idx, code)
        np.testing.assert_allclose(b_c, b_py, rtol=1e-10, atol=1e-12)
        np.testing.assert_array_equal(g_c, g_py)
        if code != 0:
            np.testing.assert_allclose(s_c, s_py, rtol=1e-9, atol=1e-12)


def test_fixed_core_parity_all_se_kinds():
    data, labels = _fixture()
    fit = ri.fit_ols(data)
    rng = np.random.default_rng(2)
    U = rng.normal(size=(150, fit.n))
    W = fit.design @ fit.bread
    bread_diag = np.diag(fit.bread).copy()
    from robustinf import _kernels

    for code in range(7):
        args = (fit.q, W, fit.beta, U, fit.leverage, code, bread_diag,
                float(fit.dof_residual), labels, 7, 1.37)
        b_py, s_py = _kernels_py.fixed_core(*args)
        b_c, s_c = _kernels.fixed_core(*args)
        np.testing.assert_allclose(b_c, b_py, rtol=1e-10, atol=1e-12)
        if code != 0:
            np.testing.assert_allclose(s_c, s_py, rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("scheme", ["pairs", "residual", "wild"])
def test_end_to_end_backend_equivalence(both_backends, scheme):
    data, _ = _fixture(seed=3)
    runner = {"pairs": ri.bootstrap_pairs, "residual": ri.bootstrap_residual,
              "wild": ri.bootstrap_wild}[scheme]
    plan = ri.ResamplePlan(scheme=scheme, replications=800, seed=5)

    set_backend("compiled")
    d_c = _quiet(runner, data, plan, se_kind="hc1")
    set_backend("python")
    d_p = _quiet(runner, data, plan, se_kind="hc1")

    np.testing.assert_allclose(d_c.coefficients, d_p.coefficients,
                               rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(d_c.se, d_p.se, rtol=1e-9, atol=1e-12)


def test_backend_selection_api(both_backends):
    set_backend("python")
    assert ri.backend_name() == "python"
    assert kernels() is _kernels_py
    set_backend("compiled")
    assert ri.backend_name() == "compiled"
    set_backend("auto")
    assert ri.backend_name() == "compiled"
    with pytest.raises(ValueError):
        set_backend("fortran")
