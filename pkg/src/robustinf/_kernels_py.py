"""Pure-NumPy implementations of the resampling hot kernels.

This module mirrors the compiled extension ``robustinf._kernels``: same
signatures, same rank tolerance, same singularity semantics. The two
backends agree to floating-point reordering (~1e-12 relative), not
bit-for-bit; determinism contracts hold within a backend.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

# Relative Cholesky pivot tolerance below which a resampled Gram matrix is
# declared rank-deficient. Shared with the compiled kernels.
RANK_REL_TOL = 1e-11

SE_NONE = 0
SE_CONVENTIONAL = 1
SE_HC0 = 2
SE_HC1 = 3
SE_HC2 = 4
SE_HC3 = 5
SE_CLUSTER = 6

# Resampled rows this close to leverage one make HC2/HC3 per-replication
# standard errors blow up; such replications are flagged for redraw.
_LEVERAGE_GUARD = 1e-10


def _chol_factor(G: np.ndarray) -> np.ndarray | None:
    """Lower Cholesky factor, or None when a pivot falls below tolerance."""
    k = G.shape[0]
    tol = RANK_REL_TOL * float(np.max(np.diag(G), initial=0.0))
    L = np.zeros((k, k))
    for j in range(k):
        s = G[j, j] - L[j, :j] @ L[j, :j]
        if not s > tol:
            return None
        d = np.sqrt(s)
        L[j, j] = d
        if j + 1 < k:
            L[j + 1 :, j] = (G[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / d
    return L


def pairs_core(X, y, idx, se_code):
    """Refit OLS on each row-resample and optionally compute coefficient SEs.

    ``idx`` is (b, m): b replications of m row draws. Returns
    (beta (b, k), se (b, k) or None, singular (b,) bool). Replications whose
    resampled design is rank-deficient (or, for HC2/HC3 standard errors,
    contains a leverage-one row) are flagged singular and left zero.
    """
    X = np.asarray(X)
    y = np.asarray(y)
    b, m = idx.shape
    k = X.shape[1]
    beta = np.zeros((b, k))
    se = np.zeros((b, k)) if se_code != SE_NONE else None
    singular = np.zeros(b, dtype=bool)
    eye = np.eye(k)

    for r in range(b):
        rows = idx[r]
        xs = X[rows]
        ys = y[rows]
        gram = xs.T @ xs
        L = _chol_factor(gram)
        if L is None or m <= k:
            singular[r] = True
            continue
        rhs = xs.T @ ys
        z = solve_triangular(L, rhs, lower=True)
        beta_r = solve_triangular(L.T, z, lower=False)
        beta[r] = beta_r
        if se_code == SE_NONE:
            continue
        resid = ys - xs @ beta_r
        l_inv = solve_triangular(L, eye, lower=True)
        ginv = l_inv.T @ l_inv
        if se_code == SE_CONVENTIONAL:
            sigma2 = (resid @ resid) / (m - k)
            se[r] = np.sqrt(sigma2 * np.diag(ginv))
            continue
        w_rows = xs @ ginv
        if se_code == SE_HC0:
            omega = resid**2
        elif se_code == SE_HC1:
            omega = resid**2 * (m / (m - k))
        else:
            h = np.einsum("ij,ij->i", w_rows, xs)
            if np.any(h >= 1.0 - _LEVERAGE_GUARD):
                singular[r] = True
                beta[r] = 0.0
                continue
            if se_code == SE_HC2:
                omega = resid**2 / (1.0 - h)
            elif se_code == SE_HC3:
                omega = resid**2 / (1.0 - h) ** 2
            else:
                raise ValueError(f"unsupported se_code {se_code} for pairs_core")
        se[r] = np.sqrt((w_rows**2 * omega[:, None]).sum(axis=0))
    return beta, se, singular


def fixed_core(
    Q,
    W,
    beta0,
    U,
    h,
    se_code,
    bread_diag,
    resid_dof,
    labels=None,
    n_clusters=0,
    cluster_a=1.0,
):
    """Fixed-design replication engine for residual and wild bootstraps.

    Each row of ``U`` (b, n) is one replication's innovation vector; the
    refit coefficients are beta0 + W'u with W = X (X'X)^{-1}, and residuals
    are u - Q(Q'u). Standard errors use the requested weighting; leverage
    ``h`` is the fixed original-design leverage. Returns (beta (b, k),
    se (b, k) or None).
    """
    Q = np.asarray(Q)
    W = np.asarray(W)
    ut = np.asarray(U).T
    n, k = W.shape
    b = ut.shape[1]
    qtu = Q.T @ ut
    beta = (beta0[:, None] + W.T @ ut).T.copy()
    if se_code == SE_NONE:
        return beta, None
    E = ut - Q @ qtu
    if se_code == SE_CONVENTIONAL:
        sigma2 = np.einsum("ib,ib->b", E, E) / resid_dof
        se = np.sqrt(sigma2[:, None] * bread_diag[None, :])
        return beta, se
    if se_code in (SE_HC0, SE_HC1, SE_HC2, SE_HC3):
        omega = E**2
        if se_code == SE_HC1:
            omega = omega * (n / resid_dof)
        elif se_code == SE_HC2:
            omega = omega / (1.0 - h)[:, None]
        elif se_code == SE_HC3:
            omega = omega / ((1.0 - h) ** 2)[:, None]
        se = np.sqrt((W**2).T @ omega).T.copy()
        return beta, se
    if se_code == SE_CLUSTER:
        order = np.argsort(labels, kind="stable")
        sorted_lab = labels[order]
        starts = np.flatnonzero(np.r_[True, np.diff(sorted_lab) > 0])
        es = E[order]
        ws = W[order]
        se2 = np.empty((b, k))
        for j in range(k):
            scores = np.add.reduceat(ws[:, j][:, None] * es, starts, axis=0)
            se2[:, j] = cluster_a * np.einsum("cb,cb->b", scores, scores)
        return beta, np.sqrt(se2)
    raise ValueError(f"unknown se_code {se_code}")
