# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled backend for the filter-recursion kernels.

Same contract as dkfsim._kernels._pure; the m x m linear solves go through
LAPACK dgesv via scipy's Cython bindings, everything else is hand-rolled
small-matrix arithmetic.
"""

import numpy as np

cimport numpy as cnp
from libc.string cimport memcpy
from scipy.linalg.cython_lapack cimport dgesv

cnp.import_array()

NAME = "compiled"


cdef inline void _mul(double* out, const double* a, const double* b, int m) noexcept:
    # out = a @ b, row-major; out must not alias a or b
    cdef int i, j, k
    cdef double acc
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(m):
                acc += a[i * m + k] * b[k * m + j]
            out[i * m + j] = acc


cdef inline void _mul_tn(double* out, const double* a, const double* b, int m) noexcept:
    # out = a.T @ b
    cdef int i, j, k
    cdef double acc
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(m):
                acc += a[k * m + i] * b[k * m + j]
            out[i * m + j] = acc


cdef inline void _mul_nt(double* out, const double* a, const double* b, int m) noexcept:
    # out = a @ b.T
    cdef int i, j, k
    cdef double acc
    for i in range(m):
        for j in range(m):
            acc = 0.0
            for k in range(m):
                acc += a[i * m + k] * b[j * m + k]
            out[i * m + j] = acc


cdef int _time_update(
    const double* a_inv,
    const double* q_inv,
    const double* info,
    double* pred,
    double* cmat,
    double* mmat,
    double* smat,
    double* tmp,
    int* ipiv,
    int m,
) noexcept:
    """pred = (I-C) M (I-C)^T + C Q^{-1} C^T with M = Ainv^T info Ainv.

    Leaves C in cmat for the information-vector propagation. Returns the
    dgesv status (0 on success). All buffers must be distinct.
    """
    cdef int i, j, nrhs = m, lda = m, ldb = m, info_out = 0
    _mul(tmp, info, a_inv, m)
    _mul_tn(mmat, a_inv, tmp, m)
    for i in range(m * m):
        smat[i] = mmat[i] + q_inv[i]
    # dgesv on row-major buffers solves S^T X = M^T, so the row-major result
    # is X^T = M S^{-1} = C directly.
    memcpy(cmat, mmat, m * m * sizeof(double))
    dgesv(&m, &nrhs, smat, &lda, ipiv, cmat, &ldb, &info_out)
    if info_out != 0:
        return info_out
    for i in range(m):
        for j in range(m):
            tmp[i * m + j] = (1.0 if i == j else 0.0) - cmat[i * m + j]
    _mul(smat, tmp, mmat, m)            # smat = (I-C) M
    _mul_nt(pred, smat, tmp, m)         # pred = (I-C) M (I-C)^T
    _mul(smat, cmat, q_inv, m)          # smat = C Q^{-1}
    _mul_nt(mmat, smat, cmat, m)        # mmat = C Q^{-1} C^T
    for i in range(m * m):
        pred[i] += mmat[i]
    for i in range(m):
        for j in range(i + 1, m):
            pred[i * m + j] = 0.5 * (pred[i * m + j] + pred[j * m + i])
            pred[j * m + i] = pred[i * m + j]
    return 0


def node_info_histories(a_inv_seq, q_inv, l_all, info0):
    """Posterior information histories I_i(k|k) for every node, k = 0..N."""
    cdef cnp.ndarray[double, ndim=3] a_inv = np.ascontiguousarray(a_inv_seq, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] qi = np.ascontiguousarray(q_inv, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] lmats = np.ascontiguousarray(l_all, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] i0 = np.ascontiguousarray(info0, dtype=np.float64)
    cdef int n = lmats.shape[0]
    cdef int m = lmats.shape[1]
    cdef int n_steps = a_inv.shape[0]
    cdef int mm = m * m
    cdef cnp.ndarray[double, ndim=4] hist = np.empty((n, n_steps + 1, m, m))
    cdef cnp.ndarray[double, ndim=1] work = np.empty(6 * mm)
    cdef cnp.ndarray[int, ndim=1] ipiv = np.empty(m, dtype=np.intc)
    cdef double* info = &work[0]
    cdef double* pred = &work[mm]
    cdef double* cmat = &work[2 * mm]
    cdef double* mmat = &work[3 * mm]
    cdef double* smat = &work[4 * mm]
    cdef double* tmp = &work[5 * mm]
    cdef double* l_i
    cdef int i, k, t, status
    for i in range(n):
        l_i = &lmats[i, 0, 0]
        for t in range(mm):
            info[t] = (&i0[i, 0, 0])[t] + l_i[t]
        memcpy(&hist[i, 0, 0, 0], info, mm * sizeof(double))
        for k in range(n_steps):
            status = _time_update(
                &a_inv[k, 0, 0], &qi[0, 0], info,
                pred, cmat, mmat, smat, tmp, &ipiv[0], m,
            )
            if status != 0:
                raise ArithmeticError(f"dgesv failed (status {status}) at node {i + 1}, step {k}")
            for t in range(mm):
                info[t] = pred[t] + l_i[t]
            memcpy(&hist[i, k + 1, 0, 0], info, mm * sizeof(double))
    return hist


def fused_info_recursion(a_inv_seq, q_inv, info_inc, iv_inc, info0, yv0):
    """Fused estimator chain; see the pure backend for the contract."""
    cdef cnp.ndarray[double, ndim=3] a_inv = np.ascontiguousarray(a_inv_seq, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] qi = np.ascontiguousarray(q_inv, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3] linc = np.ascontiguousarray(info_inc, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] vinc = np.ascontiguousarray(iv_inc, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] i0 = np.ascontiguousarray(info0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1] y0 = np.ascontiguousarray(yv0, dtype=np.float64)
    cdef int n_out = linc.shape[0]
    cdef int m = linc.shape[1]
    cdef int mm = m * m
    cdef cnp.ndarray[double, ndim=3] info_hist = np.empty((n_out, m, m))
    cdef cnp.ndarray[double, ndim=2] yv_hist = np.empty((n_out, m))
    cdef cnp.ndarray[double, ndim=1] work = np.empty(6 * mm + 2 * m)
    cdef cnp.ndarray[int, ndim=1] ipiv = np.empty(m, dtype=np.intc)
    cdef double* info = &work[0]
    cdef double* pred = &work[mm]
    cdef double* cmat = &work[2 * mm]
    cdef double* mmat = &work[3 * mm]
    cdef double* smat = &work[4 * mm]
    cdef double* tmp = &work[5 * mm]
    cdef double* yv = &work[6 * mm]
    cdef double* yt = &work[6 * mm + m]
    cdef int i, j, k, status
    cdef double acc
    for i in range(mm):
        info[i] = (&i0[0, 0])[i] + (&linc[0, 0, 0])[i]
    for i in range(m):
        yv[i] = y0[i] + vinc[0, i]
    memcpy(&info_hist[0, 0, 0], info, mm * sizeof(double))
    memcpy(&yv_hist[0, 0], yv, m * sizeof(double))
    for k in range(1, n_out):
        status = _time_update(
            &a_inv[k - 1, 0, 0], &qi[0, 0], info,
            pred, cmat, mmat, smat, tmp, &ipiv[0], m,
        )
        if status != 0:
            raise ArithmeticError(f"dgesv failed (status {status}) at step {k}")
        # yt = Ainv^T yv ; yv' = (I - C) yt
        for i in range(m):
            acc = 0.0
            for j in range(m):
                acc += a_inv[k - 1, j, i] * yv[j]
            yt[i] = acc
        for i in range(m):
            acc = yt[i]
            for j in range(m):
                acc -= cmat[i * m + j] * yt[j]
            yv[i] = acc + vinc[k, i]
        for i in range(mm):
            info[i] = pred[i] + (&linc[k, 0, 0])[i]
        memcpy(&info_hist[k, 0, 0], info, mm * sizeof(double))
        memcpy(&yv_hist[k, 0], yv, m * sizeof(double))
    return info_hist, yv_hist
