"""Numpy implementations of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def batch_gse(W, orders):
    W = np.ascontiguousarray(W, dtype=float)
    orders = np.asarray(orders, dtype=float)
    pos = W > 0
    with np.errstate(divide="ignore"):
        lp = np.log(W)
    lp = lp - lp.max(axis=1, keepdims=True)
    out = np.empty((W.shape[0], orders.size))
    for j, m in enumerate(orders):
        d = np.where(pos, m * lp, 0.0)
        e = np.where(pos, np.exp(d), 0.0)
        s = e.sum(axis=1)
        out[:, j] = np.log(s) - (e * d).sum(axis=1) / s
    return out


def _closed_form(A):
    k = A.shape[-1]
    if k == 1:
        return A[:, 0, 0]
    if k == 2:
        return A[:, 0, 0] * A[:, 1, 1] - A[:, 0, 1] * A[:, 1, 0]
    return (
        A[:, 0, 0] * (A[:, 1, 1] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 1])
        - A[:, 0, 1] * (A[:, 1, 0] * A[:, 2, 2] - A[:, 1, 2] * A[:, 2, 0])
        + A[:, 0, 2] * (A[:, 1, 0] * A[:, 2, 1] - A[:, 1, 1] * A[:, 2, 0])
    )


def det_stack(A):
    A = np.asarray(A, dtype=float)
    if A.shape[0] == 0:
        return np.empty(0)
    if A.shape[-1] <= 3:
        return _closed_form(A)
    # LAPACK getrf: LU with partial pivoting
    return np.linalg.det(A)


def principal_minors(A):
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    masks = np.arange(1 << n)
    bits = (masks[:, None] >> np.arange(n)) & 1
    sizes = bits.sum(axis=1)
    out = np.empty(1 << n)
    out[0] = 1.0
    for k in range(1, n + 1):
        sel = np.flatnonzero(sizes == k)
        idx = np.array([np.flatnonzero(bits[s]) for s in sel])
        sub = A[idx[:, :, None], idx[:, None, :]]
        out[sel] = det_stack(sub)
    return out
