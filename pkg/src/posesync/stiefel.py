"""Geometry of the product manifold St(d, r)^n.

A point is an r x dn array whose d-column blocks ``Y[:, d*i:d*(i+1)]`` each
have orthonormal columns.  Tangent vectors have the same shape.  The metric
is the Euclidean (trace) inner product inherited from R^{r x dn}.
"""
import numpy as np

from posesync import kernels
from posesync.errors import RetractionError


class StiefelProduct:
    def __init__(self, n, d, r, backend=None):
        if r < d:
            raise ValueError(f"rank r={r} must be at least d={d}")
        self.n, self.d, self.r = n, d, r
        self._k = kernels.resolve(backend)

    @property
    def shape(self):
        return (self.r, self.d * self.n)

    @property
    def dim(self):
        return self.n * (self.r * self.d - self.d * (self.d + 1) // 2)

    def _check(self, X):
        if X.shape != self.shape:
            raise ValueError(f"expected shape {self.shape}, got {X.shape}")

    def blocks(self, Y):
        """View of ``Y`` as an (n, r, d) stack of blocks (a copy)."""
        return Y.reshape(self.r, self.n, self.d).transpose(1, 0, 2)

    def from_blocks(self, B):
        return np.ascontiguousarray(B.transpose(1, 0, 2).reshape(self.r, self.n * self.d))

    def sym_block_diag(self, A, B):
        """Symmetrized d x d diagonal blocks of A^T B, as an (n, d, d) array."""
        self._check(A)
        self._check(B)
        return self._k.sym_block_diag(
            np.ascontiguousarray(A, dtype=float), np.ascontiguousarray(B, dtype=float), self.d
        )

    def block_multiply(self, X, S):
        """Block i of the result is X_i S_i."""
        return self._k.block_right_multiply(
            np.ascontiguousarray(X, dtype=float), np.ascontiguousarray(S, dtype=float)
        )

    def proj(self, Y, X):
        return X - self.block_multiply(Y, self.sym_block_diag(Y, X))

    def inner(self, U, V):
        return float(np.vdot(U, V))

    def norm(self, U):
        return float(np.linalg.norm(U))

    def retract(self, Y, V):
        """Blockwise QR retraction, R factors with positive diagonal."""
        self._check(Y)
        self._check(V)
        if not V.any():
            return Y.copy()
        Q, R = np.linalg.qr(self.blocks(Y + V))
        diag = np.diagonal(R, axis1=1, axis2=2)
        scale = np.linalg.norm(R, axis=(1, 2))
        if np.any(np.abs(diag) <= 1e-14 * np.maximum(scale, 1.0)[:, None]):
            raise RetractionError("rank-deficient block in retraction")
        return self.from_blocks(Q * np.sign(diag)[:, None, :])

    def random_point(self, seed=None):
        rng = np.random.default_rng(seed)
        G = rng.standard_normal((self.n, self.r, self.d))
        Q, R = np.linalg.qr(G)
        return self.from_blocks(Q * np.sign(np.diagonal(R, axis1=1, axis2=2))[:, None, :])

    def random_tangent(self, Y, seed=None):
        rng = np.random.default_rng(seed)
        V = self.proj(Y, rng.standard_normal(self.shape))
        norm = self.norm(V)
        # St(1, 1) has a zero-dimensional tangent space
        return V / norm if norm > 0 else V

    def zero_vector(self):
        return np.zeros(self.shape)

    def lift(self, Y, rows=1):
        """Pad ``Y`` with zero rows; the result lies on St(d, r + rows)^n."""
        return np.vstack([Y, np.zeros((rows, Y.shape[1]))])

    def orthonormality_error(self, Y):
        B = self.blocks(Y)
        return float(np.abs(B.transpose(0, 2, 1) @ B - np.eye(self.d)).max())
