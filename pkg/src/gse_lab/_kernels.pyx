# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels. ``_kernels_py`` holds the numpy twin of every function."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs, INFINITY

cnp.import_array()


def batch_gse(const double[:, ::1] W, const double[::1] orders):
    """GSE of every row of nonnegative weights ``W`` at every order.

    Rows need not be normalized; zero entries are skipped.
    """
    cdef Py_ssize_t n = W.shape[0], K = W.shape[1], r = orders.shape[0]
    cdef Py_ssize_t i, j, k
    cdef double m, L, s, acc, d, e, lmax
    out = np.empty((n, r), dtype=np.float64)
    cdef double[:, ::1] H = out
    cdef double[::1] lp = np.empty(K, dtype=np.float64)
    with nogil:
        for i in range(n):
            lmax = -INFINITY
            for k in range(K):
                if W[i, k] > 0.0:
                    lp[k] = log(W[i, k])
                    if lp[k] > lmax:
                        lmax = lp[k]
                else:
                    lp[k] = -INFINITY
            for j in range(r):
                m = orders[j]
                s = 0.0
                acc = 0.0
                for k in range(K):
                    if lp[k] > -INFINITY:
                        d = m * (lp[k] - lmax)
                        e = exp(d)
                        s += e
                        acc += e * d
                H[i, j] = log(s) - acc / s
    return out


cdef double _det_small(double* a, Py_ssize_t k) noexcept nogil:
    """Determinant of the row-major k x k buffer ``a`` (destroyed for k > 4)."""
    cdef double s0, s1, s2, s3, s4, s5, c0, c1, c2, c3, c4, c5
    cdef double det, piv, f, t
    cdef Py_ssize_t i, j, c, p
    if k == 1:
        return a[0]
    if k == 2:
        return a[0] * a[3] - a[1] * a[2]
    if k == 3:
        return (a[0] * (a[4] * a[8] - a[5] * a[7])
                - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6]))
    if k == 4:
        # Laplace expansion along the first two rows
        s0 = a[0] * a[5] - a[1] * a[4]
        s1 = a[0] * a[6] - a[2] * a[4]
        s2 = a[0] * a[7] - a[3] * a[4]
        s3 = a[1] * a[6] - a[2] * a[5]
        s4 = a[1] * a[7] - a[3] * a[5]
        s5 = a[2] * a[7] - a[3] * a[6]
        c5 = a[10] * a[15] - a[11] * a[14]
        c4 = a[9] * a[15] - a[11] * a[13]
        c3 = a[9] * a[14] - a[10] * a[13]
        c2 = a[8] * a[15] - a[11] * a[12]
        c1 = a[8] * a[14] - a[10] * a[12]
        c0 = a[8] * a[13] - a[9] * a[12]
        return s0 * c5 - s1 * c4 + s2 * c3 + s3 * c2 - s4 * c1 + s5 * c0
    det = 1.0
    for c in range(k):
        p = c
        piv = fabs(a[c * k + c])
        for i in range(c + 1, k):
            if fabs(a[i * k + c]) > piv:
                piv = fabs(a[i * k + c])
                p = i
        if piv == 0.0:
            return 0.0
        if p != c:
            for j in range(k):
                t = a[c * k + j]
                a[c * k + j] = a[p * k + j]
                a[p * k + j] = t
            det = -det
        det *= a[c * k + c]
        for i in range(c + 1, k):
            f = a[i * k + c] / a[c * k + c]
            for j in range(c + 1, k):
                a[i * k + j] -= f * a[c * k + j]
    return det


def det_stack(const double[:, :, ::1] A):
    """Determinants of a stack of square matrices, shape ``(n, k, k)``."""
    cdef Py_ssize_t n = A.shape[0], k = A.shape[1], i, a, b
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    cdef double[::1] buf = np.empty(max(k * k, 1), dtype=np.float64)
    with nogil:
        for i in range(n):
            for a in range(k):
                for b in range(k):
                    buf[a * k + b] = A[i, a, b]
            res[i] = _det_small(&buf[0], k)
    return out


def principal_minors(const double[:, ::1] A):
    """All principal minors indexed by bitmask; entry 0 is the empty minor 1."""
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t total = 1 << n
    cdef Py_ssize_t mask, i, j, k
    cdef Py_ssize_t[64] idx
    out = np.empty(total, dtype=np.float64)
    cdef double[::1] res = out
    cdef double[::1] buf = np.empty(max(n * n, 1), dtype=np.float64)
    res[0] = 1.0
    with nogil:
        for mask in range(1, total):
            k = 0
            for i in range(n):
                if (mask >> i) & 1:
                    idx[k] = i
                    k += 1
            for i in range(k):
                for j in range(k):
                    buf[i * k + j] = A[idx[i], idx[j]]
            res[mask] = _det_small(&buf[0], k)
    return out
