"""Cost F(Y) = tr(Q Y^T Y) on St(d, r)^n and its Riemannian derivatives."""
import numpy as np
import scipy.sparse as sp

from posesync.matrices import DataMatrixSet, apply_Q
from posesync.stiefel import StiefelProduct


class Objective:
    """Cost, gradients, Hessian-vector products and an optional preconditioner.

    The last ``(Y, Y Q)`` pair is cached, so cost/gradient/Hessian calls at
    the same point share one product with Q.  One handle per thread.
    """

    def __init__(self, mats: DataMatrixSet, r, backend=None, preconditioner=False):
        self.mats = mats
        self.manifold = StiefelProduct(mats.n, mats.d, r, backend)
        self.use_preconditioner = preconditioner
        self._Y = None
        self._YQ = None
        self._lam = None
        self._block_inv = None

    @property
    def r(self):
        return self.manifold.r

    def _product(self, Y):
        if self._Y is None or self._Y.shape != Y.shape or not np.array_equal(self._Y, Y):
            self._Y = np.array(Y, dtype=float)
            self._YQ = apply_Q(self.mats, self._Y)
            self._lam = None
        return self._YQ

    def YQ(self, Y):
        return self._product(Y)

    def multipliers(self, Y):
        """SymBlockDiag(Y^T Y Q) blocks, shape (n, d, d)."""
        YQ = self._product(Y)
        if self._lam is None:
            self._lam = self.manifold.sym_block_diag(Y, YQ)
        return self._lam

    def cost(self, Y):
        return float(np.vdot(self._product(Y), Y))

    def euclidean_gradient(self, Y):
        return 2.0 * self._product(Y)

    def gradient(self, Y):
        """proj_Y(2 Y Q) = 2 (YQ - Y SymBlockDiag(Y^T Y Q))."""
        YQ = self._product(Y)
        return 2.0 * (YQ - self.manifold.block_multiply(Y, self.multipliers(Y)))

    def hessian(self, Y, V):
        """proj_Y(2 V Q - V SymBlockDiag(Y^T 2 Y Q))."""
        lam = self.multipliers(Y)
        ambient = 2.0 * apply_Q(self.mats, V) - 2.0 * self.manifold.block_multiply(V, lam)
        return self.manifold.proj(Y, ambient)

    def _block_inverses(self):
        if self._block_inv is None:
            mats, d, n = self.mats, self.mats.d, self.mats.n
            approx = (mats.L_rho + mats.T.T @ sp.diags(mats.Omega) @ mats.T).tocsr()
            blocks = np.empty((n, d, d))
            for i in range(n):
                s = slice(d * i, d * (i + 1))
                blocks[i] = approx[s, s].toarray()
            inv = np.empty_like(blocks)
            eye = np.eye(d)
            for i, B in enumerate(blocks):
                w = np.linalg.eigvalsh(B)
                # Near-singular blocks fall back to the identity.
                inv[i] = np.linalg.inv(B) if w[0] > 1e-10 * max(w[-1], 1.0) else eye
            self._block_inv = inv
        return self._block_inv

    def precondition(self, Y, V):
        if not self.use_preconditioner:
            return V
        return self.manifold.proj(Y, self.manifold.block_multiply(V, self._block_inverses()))
