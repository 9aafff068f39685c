# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled resampling hot kernels.

Twin of ``robustinf._kernels_py``: same signatures, same rank tolerance,
same singularity semantics. Row loops run without the GIL so replication
chunks can execute on real threads.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc

RANK_REL_TOL = 1e-11

SE_NONE = 0
SE_CONVENTIONAL = 1
SE_HC0 = 2
SE_HC1 = 3
SE_HC2 = 4
SE_HC3 = 5
SE_CLUSTER = 6

cdef int _SE_NONE = 0
cdef int _SE_CONVENTIONAL = 1
cdef int _SE_HC0 = 2
cdef int _SE_HC1 = 3
cdef int _SE_HC2 = 4
cdef int _SE_HC3 = 5
cdef int _SE_CLUSTER = 6
cdef double _RANK_REL_TOL = 1e-11
cdef double _LEVERAGE_GUARD = 1e-10


cdef int _chol_factor(double* G, double* L, int k) noexcept nogil:
    """In-place lower Cholesky with a relative pivot tolerance.

    Returns 1 on success, 0 when the matrix is numerically rank-deficient.
    """
    cdef int i, j, t
    cdef double s, d, maxdiag, tol
    maxdiag = 0.0
    for j in range(k):
        if G[j * k + j] > maxdiag:
            maxdiag = G[j * k + j]
    tol = _RANK_REL_TOL * maxdiag
    for j in range(k):
        s = G[j * k + j]
        for t in range(j):
            s -= L[j * k + t] * L[j * k + t]
        if not s > tol:
            return 0
        d = sqrt(s)
        L[j * k + j] = d
        for i in range(j + 1, k):
            s = G[i * k + j]
            for t in range(j):
                s -= L[i * k + t] * L[j * k + t]
            L[i * k + j] = s / d
    return 1


cdef void _chol_solve(double* L, double* rhs, double* out, double* work, int k) noexcept nogil:
    cdef int i, t
    cdef double s
    for i in range(k):
        s = rhs[i]
        for t in range(i):
            s -= L[i * k + t] * work[t]
        work[i] = s / L[i * k + i]
    for i in range(k - 1, -1, -1):
        s = work[i]
        for t in range(i + 1, k):
            s -= L[t * k + i] * out[t]
        out[i] = s / L[i * k + i]


cdef void _chol_inverse(double* L, double* linv, double* ginv, int k) noexcept nogil:
    """ginv = (L L')^{-1} via the triangular inverse of L."""
    cdef int i, j, t
    cdef double s
    for j in range(k):
        linv[j * k + j] = 1.0 / L[j * k + j]
        for i in range(j + 1, k):
            s = 0.0
            for t in range(j, i):
                s += L[i * k + t] * linv[t * k + j]
            linv[i * k + j] = -s / L[i * k + i]
    for i in range(k):
        for j in range(i + 1):
            s = 0.0
            for t in range(i, k):
                if t >= j:
                    s += linv[t * k + i] * linv[t * k + j]
            ginv[i * k + j] = s
            ginv[j * k + i] = s


def pairs_core(X, y, idx, int se_code):
    """Refit OLS on each row-resample; see the NumPy twin for semantics."""
    cdef const double[:, ::1] xv = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const cnp.int64_t[:, ::1] iv = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t b = iv.shape[0]
    cdef Py_ssize_t m = iv.shape[1]
    cdef Py_ssize_t k = xv.shape[1]

    beta_arr = np.zeros((b, k))
    singular_arr = np.zeros(b, dtype=np.uint8)
    se_arr = np.zeros((b, k)) if se_code != _SE_NONE else None
    cdef double[:, ::1] beta = beta_arr
    cdef cnp.uint8_t[::1] sing = singular_arr
    cdef double[:, ::1] se = se_arr if se_arr is not None else beta_arr

    cdef int want_se = 1 if se_code != _SE_NONE else 0
    cdef int code = se_code
    cdef Py_ssize_t r, i, j, t, row
    cdef double u, acc, resid, rss, sigma2, omega, h
    cdef int ok, bad

    cdef double* G = <double*> malloc(k * k * sizeof(double))
    cdef double* L = <double*> malloc(k * k * sizeof(double))
    cdef double* linv = <double*> malloc(k * k * sizeof(double))
    cdef double* ginv = <double*> malloc(k * k * sizeof(double))
    cdef double* rhs = <double*> malloc(k * sizeof(double))
    cdef double* work = <double*> malloc(k * sizeof(double))
    cdef double* bvec = <double*> malloc(k * sizeof(double))
    cdef double* wrow = <double*> malloc(k * sizeof(double))
    cdef double* se2 = <double*> malloc(k * sizeof(double))
    if not (G and L and linv and ginv and rhs and work and bvec and wrow and se2):
        free(G); free(L); free(linv); free(ginv); free(rhs)
        free(work); free(bvec); free(wrow); free(se2)
        raise MemoryError()

    with nogil:
        for r in range(b):
            for i in range(k * k):
                G[i] = 0.0
                L[i] = 0.0
                linv[i] = 0.0
            for j in range(k):
                rhs[j] = 0.0
            for t in range(m):
                row = iv[r, t]
                u = yv[row]
                for i in range(k):
                    rhs[i] += xv[row, i] * u
                    for j in range(i + 1):
                        G[i * k + j] += xv[row, i] * xv[row, j]
            for i in range(k):
                for j in range(i + 1, k):
                    G[i * k + j] = G[j * k + i]
            ok = _chol_factor(G, L, <int> k)
            if ok == 0 or m <= k:
                sing[r] = 1
                continue
            _chol_solve(L, rhs, bvec, work, <int> k)
            for j in range(k):
                beta[r, j] = bvec[j]
            if want_se == 0:
                continue
            _chol_inverse(L, linv, ginv, <int> k)
            rss = 0.0
            for j in range(k):
                se2[j] = 0.0
            bad = 0
            for t in range(m):
                row = iv[r, t]
                resid = yv[row]
                for j in range(k):
                    resid -= xv[row, j] * bvec[j]
                if code == _SE_CONVENTIONAL:
                    rss += resid * resid
                    continue
                for i in range(k):
                    acc = 0.0
                    for j in range(k):
                        acc += ginv[i * k + j] * xv[row, j]
                    wrow[i] = acc
                if code == _SE_HC0:
                    omega = resid * resid
                elif code == _SE_HC1:
                    omega = resid * resid * (<double> m / <double> (m - k))
                else:
                    h = 0.0
                    for i in range(k):
                        h += wrow[i] * xv[row, i]
                    if h >= 1.0 - _LEVERAGE_GUARD:
                        bad = 1
                        break
                    if code == _SE_HC2:
                        omega = resid * resid / (1.0 - h)
                    else:
                        omega = resid * resid / ((1.0 - h) * (1.0 - h))
                for i in range(k):
                    se2[i] += wrow[i] * wrow[i] * omega
            if bad:
                sing[r] = 1
                for j in range(k):
                    beta[r, j] = 0.0
                continue
            if code == _SE_CONVENTIONAL:
                sigma2 = rss / (<double> (m - k))
                for j in range(k):
                    se[r, j] = sqrt(sigma2 * ginv[j * k + j])
            else:
                for j in range(k):
                    se[r, j] = sqrt(se2[j])

    free(G); free(L); free(linv); free(ginv); free(rhs)
    free(work); free(bvec); free(wrow); free(se2)
    return beta_arr, se_arr, singular_arr.astype(bool)


def fixed_core(
    Q,
    W,
    beta0,
    U,
    h,
    int se_code,
    bread_diag,
    double resid_dof,
    labels=None,
    int n_clusters=0,
    double cluster_a=1.0,
):
    """Fixed-design replication engine; see the NumPy twin for semantics.

    ``U`` is (b, n): one replication's innovation vector per row.
    """
    cdef const double[:, ::1] qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef const double[:, ::1] wv = np.ascontiguousarray(W, dtype=np.float64)
    cdef const double[::1] b0 = np.ascontiguousarray(beta0, dtype=np.float64)
    cdef const double[:, ::1] uv = np.ascontiguousarray(U, dtype=np.float64)
    cdef const double[::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef const double[::1] bd = np.ascontiguousarray(bread_diag, dtype=np.float64)
    cdef Py_ssize_t b = uv.shape[0]
    cdef Py_ssize_t n = qv.shape[0]
    cdef Py_ssize_t k = qv.shape[1]

    lab_arr = (
        np.ascontiguousarray(labels, dtype=np.int64)
        if labels is not None
        else np.zeros(1, dtype=np.int64)
    )
    cdef const cnp.int64_t[::1] lab = lab_arr

    beta_arr = np.zeros((b, k))
    se_arr = np.zeros((b, k)) if se_code != _SE_NONE else None
    cdef double[:, ::1] beta = beta_arr
    cdef double[:, ::1] se = se_arr if se_arr is not None else beta_arr
    cdef int want_se = 1 if se_code != _SE_NONE else 0
    cdef int code = se_code

    cdef Py_ssize_t r, i, j, c
    cdef double u, e, rss, sigma2, omega, s
    cdef Py_ssize_t accsize = n_clusters * k if code == _SE_CLUSTER else 1

    cdef double* qtv = <double*> malloc(k * sizeof(double))
    cdef double* bw = <double*> malloc(k * sizeof(double))
    cdef double* se2 = <double*> malloc(k * sizeof(double))
    cdef double* acc = <double*> malloc(accsize * sizeof(double))
    if not (qtv and bw and se2 and acc):
        free(qtv); free(bw); free(se2); free(acc)
        raise MemoryError()

    with nogil:
        for r in range(b):
            for j in range(k):
                qtv[j] = 0.0
                bw[j] = 0.0
                se2[j] = 0.0
            for i in range(n):
                u = uv[r, i]
                for j in range(k):
                    qtv[j] += qv[i, j] * u
                    bw[j] += wv[i, j] * u
            for j in range(k):
                beta[r, j] = b0[j] + bw[j]
            if want_se == 0:
                continue
            if code == _SE_CLUSTER:
                for i in range(accsize):
                    acc[i] = 0.0
            rss = 0.0
            for i in range(n):
                e = uv[r, i]
                for j in range(k):
                    e -= qv[i, j] * qtv[j]
                if code == _SE_CONVENTIONAL:
                    rss += e * e
                elif code == _SE_CLUSTER:
                    c = lab[i]
                    for j in range(k):
                        acc[c * k + j] += wv[i, j] * e
                else:
                    omega = e * e
                    if code == _SE_HC1:
                        omega = omega * (<double> n / resid_dof)
                    elif code == _SE_HC2:
                        omega = omega / (1.0 - hv[i])
                    elif code == _SE_HC3:
                        omega = omega / ((1.0 - hv[i]) * (1.0 - hv[i]))
                    for j in range(k):
                        se2[j] += wv[i, j] * wv[i, j] * omega
            if code == _SE_CONVENTIONAL:
                sigma2 = rss / resid_dof
                for j in range(k):
                    se[r, j] = sqrt(sigma2 * bd[j])
            elif code == _SE_CLUSTER:
                for j in range(k):
                    s = 0.0
                    for c in range(n_clusters):
                        s += acc[c * k + j] * acc[c * k + j]
                    se[r, j] = sqrt(cluster_a * s)
            else:
                for j in range(k):
                    se[r, j] = sqrt(se2[j])

    free(qtv); free(bw); free(se2); free(acc)
    return beta_arr, se_arr
