# cython: language_level=3
"""Compiled kernels: up-looking sparse Cholesky, multi-RHS triangular solves,
and the d x d block products used by the Stiefel geometry.

All sparse matrices are CSC with int64 indices.  The Cholesky factor stores
the diagonal entry first in every column.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

from posesync.errors import NotPositiveDefiniteError

cnp.import_array()

ctypedef cnp.int64_t idx_t


cdef void _etree(idx_t n, const idx_t[::1] Ap, const idx_t[::1] Ai,
                 idx_t[::1] parent, idx_t[::1] ancestor) noexcept nogil:
    cdef idx_t k, p, i, inext
    for k in range(n):
        parent[k] = -1
        ancestor[k] = -1
        for p in range(Ap[k], Ap[k + 1]):
            i = Ai[p]
            while i != -1 and i < k:
                inext = ancestor[i]
                ancestor[i] = k
                if inext == -1:
                    parent[i] = k
                i = inext


cdef idx_t _ereach(idx_t n, idx_t k, const idx_t[::1] Ap, const idx_t[::1] Ai,
                   const idx_t[::1] parent, idx_t[::1] s, idx_t[::1] w) noexcept nogil:
    # Row pattern of L(k, :k) in topological order, returned as s[top:n].
    cdef idx_t top = n, length, p, i
    w[k] = k
    for p in range(Ap[k], Ap[k + 1]):
        i = Ai[p]
        if i > k:
            continue
        length = 0
        while w[i] != k:
            s[length] = i
            length += 1
            w[i] = k
            i = parent[i]
        while length > 0:
            top -= 1
            length -= 1
            s[top] = s[length]
    return top


def cholesky(idx_t n, idx_t[::1] Ap, idx_t[::1] Ai, double[::1] Ax):
    """Factor a symmetric positive-definite CSC matrix as L L^T.

    Only the upper triangle of the input is read.  Returns ``(Lp, Li, Lx)``.
    """
    cdef idx_t[::1] parent = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] ancestor = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] s = np.empty(n, dtype=np.int64)
    cdef idx_t[::1] w = np.full(n, -1, dtype=np.int64)
    cdef idx_t[::1] counts = np.ones(n, dtype=np.int64)
    cdef idx_t k, top, p, i, nnz
    cdef double d, lki
    cdef bint failed = False
    cdef idx_t failed_at = -1

    with nogil:
        _etree(n, Ap, Ai, parent, ancestor)
        for k in range(n):
            top = _ereach(n, k, Ap, Ai, parent, s, w)
            while top < n:
                counts[s[top]] += 1
                top += 1

    Lp_arr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=Lp_arr[1:])
    nnz = Lp_arr[n]
    cdef idx_t[::1] Lp = Lp_arr
    cdef idx_t[::1] Li = np.empty(nnz, dtype=np.int64)
    cdef double[::1] Lx = np.empty(nnz, dtype=np.float64)
    cdef idx_t[::1] c = Lp_arr[:n].copy()
    cdef double[::1] x = np.zeros(n, dtype=np.float64)
    w[:] = -1

    with nogil:
        for k in range(n):
            top = _ereach(n, k, Ap, Ai, parent, s, w)
            x[k] = 0.0
            for p in range(Ap[k], Ap[k + 1]):
                if Ai[p] <= k:
                    x[Ai[p]] += Ax[p]
            d = x[k]
            x[k] = 0.0
            while top < n:
                i = s[top]
                lki = x[i] / Lx[Lp[i]]
                x[i] = 0.0
                for p in range(Lp[i] + 1, c[i]):
                    x[Li[p]] -= Lx[p] * lki
                d -= lki * lki
                p = c[i]
                c[i] += 1
                Li[p] = k
                Lx[p] = lki
                top += 1
            if d <= 0.0:
                failed = True
                failed_at = k
                break
            p = c[k]
            c[k] += 1
            Li[p] = k
            Lx[p] = sqrt(d)

    if failed:
        raise NotPositiveDefiniteError(f"non-positive pivot at column {failed_at}")
    return Lp_arr, np.asarray(Li), np.asarray(Lx)


def prepare_factor(Lp, Li, Lx):
    return (np.ascontiguousarray(Lp, dtype=np.int64),
            np.ascontiguousarray(Li, dtype=np.int64),
            np.ascontiguousarray(Lx, dtype=np.float64))


def solve_lower(factor, B):
    """Overwrite ``B`` (n x k, C-ordered) with L^{-1} B."""
    _solve_lower(factor[0], factor[1], factor[2], B)


def solve_lower_transpose(factor, B):
    """Overwrite ``B`` (n x k, C-ordered) with L^{-T} B."""
    _solve_lower_transpose(factor[0], factor[1], factor[2], B)


cdef _solve_lower(idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx, double[:, ::1] B):
    cdef idx_t n = B.shape[0], k = B.shape[1]
    cdef idx_t j, p, col, row
    cdef double piv, l
    with nogil:
        for j in range(n):
            piv = Lx[Lp[j]]
            for col in range(k):
                B[j, col] /= piv
            for p in range(Lp[j] + 1, Lp[j + 1]):
                row = Li[p]
                l = Lx[p]
                for col in range(k):
                    B[row, col] -= l * B[j, col]


cdef _solve_lower_transpose(idx_t[::1] Lp, idx_t[::1] Li, double[::1] Lx, double[:, ::1] B):
    cdef idx_t n = B.shape[0], k = B.shape[1]
    cdef idx_t j, p, col, row
    cdef double piv, l
    with nogil:
        for j in range(n - 1, -1, -1):
            for p in range(Lp[j] + 1, Lp[j + 1]):
                row = Li[p]
                l = Lx[p]
                for col in range(k):
                    B[j, col] -= l * B[row, col]
            piv = Lx[Lp[j]]
            for col in range(k):
                B[j, col] /= piv


def sym_block_diag(double[:, ::1] A, double[:, ::1] B, int d):
    """Symmetric parts of the diagonal blocks of A^T B, shape (n, d, d)."""
    cdef idx_t r = A.shape[0], dn = A.shape[1]
    cdef idx_t n = dn // d
    out_arr = np.zeros((n, d, d), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef idx_t i, a, b, q, base
    cdef double acc
    with nogil:
        for i in range(n):
            base = i * d
            for a in range(d):
                for b in range(d):
                    acc = 0.0
                    for q in range(r):
                        acc = acc + A[q, base + a] * B[q, base + b]
                    out[i, a, b] = acc
            for a in range(d):
                for b in range(a + 1, d):
                    acc = 0.5 * (out[i, a, b] + out[i, b, a])
                    out[i, a, b] = acc
                    out[i, b, a] = acc
    return out_arr


def block_right_multiply(double[:, ::1] X, double[:, :, ::1] S):
    """Blockwise product: block i of the result is X_i S_i."""
    cdef idx_t r = X.shape[0], dn = X.shape[1]
    cdef idx_t n = S.shape[0], d = S.shape[1]
    out_arr = np.zeros((r, dn), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef idx_t i, q, a, b, base
    cdef double acc
    with nogil:
        for q in range(r):
            for i in range(n):
                base = i * d
                for b in range(d):
                    acc = 0.0
                    for a in range(d):
                        acc = acc + X[q, base + a] * S[i, a, b]
                    out[q, base + b] = acc
    return out_arr
