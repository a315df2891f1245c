"""Kernel backend selection and the sparse Cholesky factor object.

The compiled extension ``posesync._ckernels`` is used when it was built;
otherwise (or when ``POSESYNC_KERNELS=python``) the numpy/scipy versions
in ``posesync._pykernels`` are used.  Both expose the same functions.
"""
import importlib
import logging
import os
from types import ModuleType

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import reverse_cuthill_mckee

log = logging.getLogger(__name__)

_MODULES = {"cython": "posesync._ckernels", "python": "posesync._pykernels"}


def get_backend(name: str) -> ModuleType:
    """Import a kernel backend by name (``"cython"`` or ``"python"``)."""
    try:
        return importlib.import_module(_MODULES[name])
    except KeyError:
        raise ValueError(f"unknown kernel backend {name!r}") from None


def available_backends() -> list[str]:
    names = []
    for name in _MODULES:
        try:
            get_backend(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select_default() -> tuple[str, ModuleType]:
    requested = os.getenv("POSESYNC_KERNELS", "").strip().lower()
    if requested == "python":
        return "python", get_backend("python")
    try:
        return "cython", get_backend("cython")
    except ImportError:
        if requested == "cython":
            raise
        log.debug("compiled kernels unavailable; using numpy/scipy fallback")
        return "python", get_backend("python")


BACKEND_NAME, backend = _select_default()


def resolve(name=None) -> ModuleType:
    return backend if name is None else get_backend(name)


class SparseCholesky:
    """Cholesky factorization ``P M P^T = L L^T`` of a sparse SPD matrix.

    ``P`` is a reverse Cuthill-McKee ordering.  ``solve`` applies ``M^{-1}``
    with one forward and one backward triangular solve.
    """

    def __init__(self, M, backend_name=None):
        M = sp.csc_matrix(M)
        self.n = M.shape[0]
        self.backend = resolve(backend_name)
        self.perm = np.asarray(
            reverse_cuthill_mckee(M.tocsr(), symmetric_mode=True), dtype=np.int64
        )
        Mp = M[self.perm][:, self.perm]
        upper = sp.triu(Mp, format="csc")
        upper.sort_indices()
        Lp, Li, Lx = self.backend.cholesky(
            self.n,
            upper.indptr.astype(np.int64),
            upper.indices.astype(np.int64),
            upper.data.astype(np.float64),
        )
        self.Lp, self.Li, self.Lx = Lp, Li, Lx
        self._factor = self.backend.prepare_factor(Lp, Li, Lx)

    @property
    def L(self):
        """Lower-triangular factor in the permuted ordering (CSC)."""
        return sp.csc_matrix((self.Lx, self.Li, self.Lp), shape=(self.n, self.n))

    @property
    def diagonal(self):
        return self.Lx[self.Lp[:-1]].copy()

    @property
    def nnz(self):
        return int(self.Lp[-1])

    def solve_L(self, B):
        """L^{-1} (P B), for B of shape (n, k)."""
        X = np.ascontiguousarray(B[self.perm], dtype=np.float64)
        self.backend.solve_lower(self._factor, X)
        return X

    def solve(self, B):
        B = np.asarray(B, dtype=np.float64)
        vector = B.ndim == 1
        if vector:
            B = B[:, None]
        X = self.solve_L(B)
        self.backend.solve_lower_transpose(self._factor, X)
        out = np.empty_like(X)
        out[self.perm] = X
        return out[:, 0] if vector else out
