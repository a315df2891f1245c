"""Pure numpy/scipy versions of the compiled kernels in ``_ckernels``.

Same signatures and storage conventions: CSC with int64 indices, diagonal
entry first in each column of the Cholesky factor, in-place solves.
"""
import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve_triangular

from posesync.errors import NotPositiveDefiniteError


def cholesky(n, Ap, Ai, Ax):
    A = sp.csc_matrix((Ax, Ai, Ap), shape=(n, n))
    # Only the upper triangle is meaningful, matching the compiled kernel.
    upper = sp.triu(A, format="csc")
    A = (upper + sp.triu(upper, k=1).T).tocsc()
    try:
        lu = splu(
            A,
            permc_spec="NATURAL",
            diag_pivot_thresh=0.0,
            options={"SymmetricMode": True},
        )
    except RuntimeError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    if not np.array_equal(lu.perm_r, np.arange(n)):
        raise NotPositiveDefiniteError("pivoting required; matrix is not positive definite")
    pivots = lu.U.diagonal()
    if np.any(pivots <= 0.0):
        bad = int(np.flatnonzero(pivots <= 0.0)[0])
        raise NotPositiveDefiniteError(f"non-positive pivot at column {bad}")
    L = (lu.L @ sp.diags(np.sqrt(pivots))).tocsc()
    L.sort_indices()
    L.eliminate_zeros()
    return (
        L.indptr.astype(np.int64),
        L.indices.astype(np.int64),
        L.data.astype(np.float64),
    )


def prepare_factor(Lp, Li, Lx):
    """Return the (L, L^T) pair in CSR form, reused across solves."""
    n = len(Lp) - 1
    lower = sp.csc_matrix((Lx, Li, Lp), shape=(n, n)).tocsr()
    # CSC arrays of L read as CSR are exactly L^T.
    upper = sp.csr_matrix((Lx, Li, Lp), shape=(n, n))
    return lower, upper


def solve_lower(factor, B):
    B[...] = spsolve_triangular(factor[0], B, lower=True)


def solve_lower_transpose(factor, B):
    B[...] = spsolve_triangular(factor[1], B, lower=False)


def sym_block_diag(A, B, d):
    r, dn = A.shape
    n = dn // d
    Ab = A.reshape(r, n, d).transpose(1, 2, 0)
    Bb = B.reshape(r, n, d).transpose(1, 0, 2)
    P = Ab @ Bb
    return 0.5 * (P + P.transpose(0, 2, 1))


def block_right_multiply(X, S):
    r, dn = X.shape
    n, d, _ = S.shape
    Xb = X.reshape(r, n, d).transpose(1, 0, 2)
    return np.ascontiguousarray((Xb @ S).transpose(1, 0, 2).reshape(r, dn))
