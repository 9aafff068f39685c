"""OLS core: fitting, residuals, leverage, and the shared sandwich bread.

Coefficients come from a pivoted QR decomposition rather than normal
equations; rank deficiency is a hard error that names the offending columns
instead of silently dropping them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data import Dataset
from .errors import RankDeficient, TooFewRows

# Observations at least this close to leverage one make the HC2/HC3/BM
# family infeasible (division by 1 - h_ii).
LEVERAGE_ONE_TOL = 1e-10


@dataclass(frozen=True)
class FitResult:
    """Everything downstream variance estimators need from one OLS fit.

    ``bread`` is (X'X)^{-1}; ``q`` is an orthonormal basis of the column
    space (thin QR factor), kept because projections through it are the
    numerically stable way to touch the hat matrix. All arrays are read-only.
    """

    beta: np.ndarray
    residuals: np.ndarray
    leverage: np.ndarray
    bread: np.ndarray
    n: int
    k: int
    sigma2_hat: float
    column_names: tuple[str, ...]
    design: np.ndarray
    outcome: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        for name in ("beta", "residuals", "leverage", "bread", "design", "outcome", "q"):
            arr = getattr(self, name)
            arr.setflags(write=False)

    @property
    def fitted(self) -> np.ndarray:
        return self.outcome - self.residuals

    @property
    def dof_residual(self) -> int:
        return self.n - self.k

    def coef_index(self, name_or_index) -> int:
        if isinstance(name_or_index, str):
            try:
                return self.column_names.index(name_or_index)
            except ValueError:
                raise KeyError(f"no coefficient named {name_or_index!r}") from None
        j = int(name_or_index)
        if not 0 <= j < self.k:
            raise IndexError(f"coefficient index {j} out of range 0..{self.k - 1}")
        return j


def _design_for(data: Dataset, columns) -> tuple[np.ndarray, tuple[str, ...]]:
    if columns is None:
        return data.covariates, data.column_names
    names = tuple(columns)
    idx = [data.column_names.index(c) for c in names]
    return data.covariates[:, idx], names


def fit_ols(data: Dataset, columns=None) -> FitResult:
    """Fit y on the selected design columns (default: all) by pivoted QR.

    Raises :class:`TooFewRows` when n <= k and :class:`RankDeficient` (with
    the offending column names) when the design has column rank < k.
    """
    X, names = _design_for(data, columns)
    y = data.outcome
    n, k = X.shape
    if n <= k:
        raise TooFewRows(n, k)

    Q, R, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    rdiag = np.abs(np.diag(R))
    tol = rdiag[0] * max(n, k) * np.finfo(np.float64).eps if rdiag.size else 0.0
    rank = int(np.count_nonzero(rdiag > tol))
    if rank < k:
        offending = [names[j] for j in sorted(piv[rank:])]
        raise RankDeficient(offending, rank, k)

    qty = Q.T @ y
    z = scipy.linalg.solve_triangular(R, qty)
    beta = np.empty(k)
    beta[piv] = z

    residuals = y - X @ beta
    leverage = np.clip(np.einsum("ij,ij->i", Q, Q), 0.0, 1.0)

    r_inv = scipy.linalg.solve_triangular(R, np.eye(k))
    bread_piv = r_inv @ r_inv.T
    bread = np.empty((k, k))
    bread[np.ix_(piv, piv)] = bread_piv
    bread = (bread + bread.T) / 2.0

    rss = float(residuals @ residuals)
    return FitResult(
        beta=beta,
        residuals=residuals,
        leverage=leverage,
        bread=bread,
        n=n,
        k=k,
        sigma2_hat=rss / (n - k),
        column_names=names,
        design=np.ascontiguousarray(X),
        outcome=np.ascontiguousarray(y),
        q=np.ascontiguousarray(Q),
    )


def leverage(fit: FitResult) -> np.ndarray:
    """Hat-matrix diagonal h_ii = X_i'(X'X)^{-1}X_i of the fit.

    Observations at leverage one (see :func:`leverage_infeasible_rows`) make
    the leverage-adjusted variance corrections undefined.
    """
    return fit.leverage


def leverage_infeasible_rows(fit: FitResult, tol: float = LEVERAGE_ONE_TOL) -> np.ndarray:
    """Row indices whose leverage is within ``tol`` of one."""
    return np.flatnonzero(fit.leverage >= 1.0 - tol)
