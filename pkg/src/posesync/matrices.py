"""Sparse data matrices of the rotation-only reformulation.

With the translations eliminated, the pose-graph cost becomes
``tr(Q R^T R)`` where::

    Q = L_rho + T^T Omega^(1/2) Pi Omega^(1/2) T

``Pi`` projects onto the kernel of ``A Omega^(1/2)`` (``A`` the incidence
matrix).  ``Pi`` is dense, so products with ``Q`` are computed from the
Cholesky factor of the reduced weighted Laplacian ``A_red Omega A_red^T``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import scipy.io
import scipy.sparse as sp

from posesync.errors import NotPositiveDefiniteError
from posesync.graph import MeasurementGraph, PoseEstimate
from posesync.kernels import SparseCholesky


@dataclass(frozen=True, eq=False)
class DataMatrixSet:
    n: int
    d: int
    m: int
    L_tau: sp.csr_matrix
    L_rho: sp.csr_matrix
    V: sp.csr_matrix
    T: sp.csr_matrix
    Omega: np.ndarray
    A_reduced: sp.csr_matrix
    chol: SparseCholesky
    # Cached products used by apply_Q.
    _T_csr: sp.csr_matrix
    _Tt_csr: sp.csr_matrix
    _AO: sp.csr_matrix
    _AOt: sp.csr_matrix
    _V_red: sp.csr_matrix

    @property
    def dn(self):
        return self.d * self.n

    @property
    def chol_diagonal(self):
        """Diagonal of the Cholesky factor, exposed for conditioning checks."""
        return self.chol.diagonal

    def apply_Q(self, Y):
        return apply_Q(self, Y)

    def scale(self):
        """Mean diagonal of L_rho + T^T Omega T, an upper bound on mean(diag(Q))."""
        diag = self.L_rho.diagonal() + np.asarray(
            self.T.multiply(self.T).T @ self.Omega
        ).ravel()
        return float(diag.mean())

    def dump(self, directory):
        """Write every matrix in Matrix Market format to ``directory``."""
        os.makedirs(directory, exist_ok=True)
        items = {
            "L_tau": self.L_tau,
            "L_rho": self.L_rho,
            "V": self.V,
            "T": self.T,
            "Omega": sp.diags(self.Omega),
            "A_reduced": self.A_reduced,
            "chol_L": self.chol.L,
        }
        for name, M in items.items():
            scipy.io.mmwrite(os.path.join(directory, f"{name}.mtx"), sp.coo_matrix(M))
        np.savetxt(os.path.join(directory, "chol_perm.txt"), self.chol.perm, fmt="%d")


def build_data_matrices(g: MeasurementGraph, backend=None) -> DataMatrixSet:
    n, d, m = g.n, g.d, g.m
    tails = np.array([e.tail for e in g.edges], dtype=np.int64)
    heads = np.array([e.head for e in g.edges], dtype=np.int64)
    tau = np.array([e.tau for e in g.edges])
    kappa = np.array([e.kappa for e in g.edges])
    t_meas = np.array([e.t for e in g.edges]).reshape(m, d)
    R_meas = np.array([e.R for e in g.edges]).reshape(m, d, d)

    # Translational weight Laplacian.
    deg_tau = np.bincount(tails, tau, n) + np.bincount(heads, tau, n)
    L_tau = sp.coo_matrix(
        (
            np.concatenate([deg_tau, -tau, -tau]),
            (
                np.concatenate([np.arange(n), tails, heads]),
                np.concatenate([np.arange(n), heads, tails]),
            ),
        ),
        shape=(n, n),
    ).tocsr()

    # Connection Laplacian: (Σ kappa) I_d on the diagonal, -kappa R_ij off it.
    deg_kappa = np.bincount(tails, kappa, n) + np.bincount(heads, kappa, n)
    a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
    a, b = a.ravel(), b.ravel()
    off_vals = (-kappa[:, None, None] * R_meas).reshape(m, d * d)
    rows_ij = (d * tails[:, None] + a).ravel()
    cols_ij = (d * heads[:, None] + b).ravel()
    diag_idx = np.arange(d * n)
    L_rho = sp.coo_matrix(
        (
            np.concatenate([np.repeat(deg_kappa, d), off_vals.ravel(), off_vals.ravel()]),
            (
                np.concatenate([diag_idx, rows_ij, cols_ij]),
                np.concatenate([diag_idx, cols_ij, rows_ij]),
            ),
        ),
        shape=(d * n, d * n),
    ).tocsr()

    # T: row e has -t_e^T in the block of the tail node.
    T = sp.coo_matrix(
        (
            -t_meas.ravel(),
            (np.repeat(np.arange(m), d), (d * tails[:, None] + np.arange(d)).ravel()),
        ),
        shape=(m, d * n),
    ).tocsr()

    # Incidence: -1 at the tail, +1 at the head.
    A = sp.coo_matrix(
        (
            np.concatenate([-np.ones(m), np.ones(m)]),
            (np.concatenate([tails, heads]), np.concatenate([np.arange(m), np.arange(m)])),
        ),
        shape=(n, m),
    ).tocsr()
    A_reduced = A[1:]
    V = (A @ sp.diags(tau) @ T).tocsr()

    reduced_laplacian = (A_reduced @ sp.diags(tau) @ A_reduced.T).tocsc()
    try:
        chol = SparseCholesky(reduced_laplacian, backend)
    except NotPositiveDefiniteError as exc:
        raise NotPositiveDefiniteError(
            f"reduced translational Laplacian is not positive definite ({exc}); "
            "the graph is numerically disconnected or has non-positive tau"
        ) from exc

    AO = (A_reduced @ sp.diags(tau)).tocsr()
    return DataMatrixSet(
        n=n,
        d=d,
        m=m,
        L_tau=L_tau,
        L_rho=L_rho,
        V=V,
        T=T,
        Omega=tau,
        A_reduced=A_reduced,
        chol=chol,
        _T_csr=T,
        _Tt_csr=T.T.tocsr(),
        _AO=AO,
        _AOt=AO.T.tocsr(),
        _V_red=V[1:].tocsr(),
    )


def apply_Q(mats: DataMatrixSet, Y):
    """Return ``Y @ Q`` for ``Y`` of shape (r, dn) (or a dn-vector)."""
    Y = np.asarray(Y, dtype=float)
    vector = Y.ndim == 1
    Yt = Y[:, None] if vector else Y.T
    if Yt.shape[0] != mats.dn:
        raise ValueError(f"expected {mats.dn} columns, got {Yt.shape[0]}")
    # Work with Y^T so every sparse product is (sparse) @ (dense, dn x r).
    X = mats._T_csr @ Yt                      # m x r
    OX = mats.Omega[:, None] * X              # Omega T Y^T
    C = mats._AO @ X                          # A_red Omega T Y^T
    G = mats.chol.solve(C)                    # (A_red Omega A_red^T)^{-1} C
    W = OX - mats._AOt @ G                    # Omega^(1/2) Pi Omega^(1/2) T Y^T
    out = mats.L_rho @ Yt + mats._Tt_csr @ W
    return out[:, 0] if vector else np.ascontiguousarray(out.T)


def recover_translations(mats: DataMatrixSet, R):
    """Optimal translations (n x d) for the rotations ``R`` (d x dn), with t_0 = 0."""
    R = np.asarray(R, dtype=float)
    if R.shape != (mats.d, mats.dn):
        raise ValueError(f"expected rotations of shape {(mats.d, mats.dn)}, got {R.shape}")
    rhs = -(mats._V_red @ R.T)                # (n-1) x d
    t = np.zeros((mats.n, mats.d))
    t[1:] = mats.chol.solve(rhs)
    return t


def evaluate_full_cost(g: MeasurementGraph, x: PoseEstimate) -> float:
    """Pose-graph cost: Σ kappa |R_j - R_i R_ij|_F^2 + tau |t_j - t_i - R_i t_ij|^2."""
    if x.n != g.n or x.d != g.d:
        raise ValueError("estimate dimensions do not match the graph")
    R, t = x.rotations, x.translations
    tails = np.array([e.tail for e in g.edges])
    heads = np.array([e.head for e in g.edges])
    tau = np.array([e.tau for e in g.edges])
    kappa = np.array([e.kappa for e in g.edges])
    t_meas = np.array([e.t for e in g.edges])
    R_meas = np.array([e.R for e in g.edges])
    Ri = R[tails]
    rot_res = R[heads] - Ri @ R_meas
    tran_res = t[heads] - t[tails] - np.einsum("eab,eb->ea", Ri, t_meas)
    return float(
        np.sum(kappa * np.sum(rot_res**2, axis=(1, 2))) + np.sum(tau * np.sum(tran_res**2, axis=1))
    )
