"""Riemannian Staircase, optimality certificates and saddle escape.

At a first-order critical point Y the block-diagonal multiplier
``Lambda(Y) = SymBlockDiag(Q Y^T Y)`` defines the certificate matrix
``S = Q - Lambda``.  ``S Y^T = 0`` holds at criticality; if in addition
``S`` is positive semidefinite then ``Y^T Y`` solves the semidefinite
relaxation.  For any Y, ``F(Y) + dn * min(lambda_min(S), 0)`` is a valid
lower bound on the relaxation's optimum (a dual feasible point).
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from posesync.matrices import DataMatrixSet, apply_Q
from posesync.objective import Objective
from posesync.rounding import round_solution
from posesync.rtr import RtrConfig, solve_rtr
from posesync.stiefel import StiefelProduct

log = logging.getLogger(__name__)


@dataclass
class StaircaseConfig:
    r0: int | None = None            # default d + 2
    r_max: int | None = None         # default d + 6
    eig_tol: float | None = None     # default 1e-5 * scale
    gap_tol: float = 1e-6
    lanczos_max_iter: int = 1000
    lanczos_ncv: int = 40
    lanczos_tol: float = 1e-9
    dense_fallback_max: int = 3000   # dn up to which a failed Lanczos run falls back to eigh
    escape_step0: float = 1.0
    escape_halvings: int = 30
    rank_tol: float = 1e-6
    seed: int = 0

    def resolved(self, mats: DataMatrixSet):
        d = mats.d
        r0 = self.r0 if self.r0 is not None else d + 2
        r_max = self.r_max if self.r_max is not None else d + 6
        r_max = min(r_max, mats.dn)
        if not d < r0 <= r_max:
            raise ValueError(f"need d < r0 <= r_max (d={d}, r0={r0}, r_max={r_max})")
        eig_tol = self.eig_tol if self.eig_tol is not None else 1e-5 * mats.scale()
        return r0, r_max, eig_tol


@dataclass
class Certificate:
    lambda_min: float
    eigvec: np.ndarray = field(repr=False)
    sdp_value: float
    rounded_value: float
    rel_gap: float
    is_certified: bool
    dual_bound: float
    grad_norm: float
    eig_converged: bool = True
    levels: int = 1

    def to_dict(self):
        return {
            "lambda_min": self.lambda_min,
            "rel_gap": self.rel_gap,
            "sdp_value": self.sdp_value,
            "rounded_value": self.rounded_value,
            "dual_bound": self.dual_bound,
            "grad_norm": self.grad_norm,
            "eig_converged": self.eig_converged,
            "certified": self.is_certified,
            "levels": self.levels,
        }


@dataclass
class LevelRecord:
    rank: int
    cost: float
    grad_norm: float
    lambda_min: float
    rtr_iterations: int
    inner_iterations: int
    rtr_status: str
    escape_status: str = ""
    solve_time: float = 0.0
    certify_time: float = 0.0
    trace: object = field(default=None, repr=False)


class CertificateOperator:
    """Implicit S = Q - Lambda(Y) acting on dn-vectors (or k x dn blocks)."""

    def __init__(self, mats: DataMatrixSet, Y):
        self.mats = mats
        Y = np.asarray(Y, dtype=float)
        self.Y = Y
        self.manifold = StiefelProduct(mats.n, mats.d, Y.shape[0])
        self.YQ = apply_Q(mats, Y)
        self.Lambda = self.manifold.sym_block_diag(Y, self.YQ)

    def matmat(self, X):
        """S applied to the rows of X (k x dn)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, d = self.mats.n, self.mats.d
        k = X.shape[0]
        XL = (X.reshape(k, n, d).transpose(1, 0, 2) @ self.Lambda).transpose(1, 0, 2).reshape(k, n * d)
        return apply_Q(self.mats, X) - XL

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return self.matmat(v[None, :])[0] if v.ndim == 1 else self.matmat(v)

    def upper_bound(self):
        """Cheap upper bound on |S|_2 from sparse one-norms."""
        mats = self.mats
        q_bound = _one_norm(mats.L_rho) + _one_norm(mats.T.T @ (mats.T.multiply(mats.Omega[:, None])))
        lam_bound = float(np.abs(np.linalg.eigvalsh(self.Lambda)).max()) if self.Lambda.size else 0.0
        return q_bound + lam_bound


def _one_norm(A):
    return float(abs(A).sum(axis=0).max()) if A.nnz else 0.0


def certificate_matrix_apply(mats, Y, v):
    return CertificateOperator(mats, Y)(v)


def min_eig(mats, Y, cfg: StaircaseConfig | None = None, op=None):
    """Minimum eigenpair of S(Y) via shifted Lanczos.

    Computes the largest eigenpair of ``sigma I - S`` with ``sigma`` an
    upper bound on the spectrum of S.  Returns ``(lambda_min, v, converged)``.
    """
    cfg = cfg or StaircaseConfig()
    op = op or CertificateOperator(mats, Y)
    dn = mats.dn
    sigma = op.upper_bound()
    rng = np.random.default_rng(cfg.seed)

    if dn <= 12:
        return _dense_min_eig(op, dn)

    # S Y^T ~ 0, so the top of the shifted spectrum is an r-fold cluster.
    # Asking for a block of r + 1 Ritz pairs makes ARPACK far more reliable
    # than k = 1 on such clusters.
    k = min(Y.shape[0] + 1, dn - 2)
    ncv = min(dn - 1, max(cfg.lanczos_ncv, 2 * k + 1))
    shifted = LinearOperator((dn, dn), matvec=lambda x: sigma * x - op(np.ravel(x)), dtype=float)
    v0 = rng.standard_normal(dn)
    converged = True
    try:
        w, V = eigsh(shifted, k=k, which="LA", v0=v0, ncv=ncv, tol=cfg.lanczos_tol, maxiter=cfg.lanczos_max_iter)
        top = int(np.argmax(w))
        v = V[:, top]
    except ArpackNoConvergence as exc:
        converged = False
        if len(exc.eigenvalues):
            top = int(np.argmax(exc.eigenvalues))
            v = exc.eigenvectors[:, top]
        else:
            v = v0
    # Rayleigh quotient on S directly; avoids cancellation in sigma - theta
    v = v / np.linalg.norm(v)
    lam = float(v @ op(v))
    residual = np.linalg.norm(op(v) - lam * v)
    if residual > 1e-6 * max(sigma, 1.0):
        converged = False
    if not converged and dn <= cfg.dense_fallback_max:
        log.info("Lanczos did not converge (dn=%d); using a dense eigensolver", dn)
        return _dense_min_eig(op, dn)
    return lam, v, converged


def _dense_min_eig(op, dn):
    S = op.matmat(np.eye(dn))
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return float(w[0]), V[:, 0], True


def lift_and_escape(h_next: Objective, Y, eigvec, grad_tol, cfg: StaircaseConfig | None = None):
    """Move from a saddle at rank r to a lower-cost point at rank r + 1.

    ``Y`` is padded with a zero row (same cost) and pushed along the
    negative-curvature direction ``eigvec`` placed in the new row.  The step
    is halved until the cost strictly decreases and the gradient is large
    enough for the next solve to move.  Returns ``(Y_new, status)``.
    """
    cfg = cfg or StaircaseConfig()
    M = h_next.manifold
    Y_lift = M.lift(Y) if Y.shape[0] == M.r - 1 else np.asarray(Y, dtype=float)
    f0 = h_next.cost(Y_lift)
    direction = np.zeros_like(Y_lift)
    direction[-1] = eigvec / np.linalg.norm(eigvec)
    t = cfg.escape_step0
    for _ in range(cfg.escape_halvings):
        Y_new = M.retract(Y_lift, t * direction)
        if h_next.cost(Y_new) < f0 and M.norm(h_next.gradient(Y_new)) > grad_tol:
            return Y_new, "ok"
        t *= 0.5
    return Y_lift, "no_decrease"


def is_rank_deficient(Y, tol=1e-6):
    s = np.sqrt(np.clip(np.linalg.eigvalsh(Y @ Y.T), 0.0, None))
    return bool(s[0] <= tol * s[-1])


def make_certificate(mats, Y, R_rounded, eig_tol, gap_tol, lam, v, converged, grad_norm, levels=1, h=None):
    h = h or Objective(mats, Y.shape[0])
    sdp_value = h.cost(Y)
    rounded_value = float(np.vdot(apply_Q(mats, R_rounded), R_rounded))
    rel_gap = (rounded_value - sdp_value) / max(1.0, abs(sdp_value))
    dual_bound = sdp_value + mats.dn * min(lam, 0.0)
    certified = bool(converged and lam >= -eig_tol and rel_gap <= gap_tol)
    return Certificate(
        lambda_min=lam,
        eigvec=v,
        sdp_value=sdp_value,
        rounded_value=rounded_value,
        rel_gap=rel_gap,
        is_certified=certified,
        dual_bound=dual_bound,
        grad_norm=grad_norm,
        eig_converged=converged,
        levels=levels,
    )


def riemannian_staircase(mats, Y0, rtr_cfg: RtrConfig | None = None, st_cfg: StaircaseConfig | None = None,
                         backend=None, preconditioner=False):
    """Solve the rank-restricted problem at increasing rank until optimal.

    Returns ``(Y, certificate, levels)`` where ``levels`` is a list of
    :class:`LevelRecord`.
    """
    rtr_cfg = rtr_cfg or RtrConfig()
    st_cfg = st_cfg or StaircaseConfig()
    _, r_max, eig_tol = st_cfg.resolved(mats)
    Y = np.asarray(Y0, dtype=float)
    r = Y.shape[0]
    grad_tol = rtr_cfg.resolved(mats.dn, 1.0)[0]
    levels = []
    while True:
        h = Objective(mats, r, backend=backend, preconditioner=preconditioner)
        t0 = time.perf_counter()
        Y, trace = solve_rtr(h, Y, rtr_cfg)
        grad_norm = h.manifold.norm(h.gradient(Y))
        t1 = time.perf_counter()
        lam, v, converged = min_eig(mats, Y, st_cfg)
        level = LevelRecord(r, h.cost(Y), grad_norm, lam, trace.iterations, trace.inner_iterations, trace.status,
                            solve_time=t1 - t0, certify_time=time.perf_counter() - t1, trace=trace)
        levels.append(level)
        log.info("rank %d: cost %.10g |grad| %.3g lambda_min %.3g", r, level.cost, grad_norm, lam)
        if lam >= -eig_tol and converged:
            break
        if is_rank_deficient(Y, st_cfg.rank_tol) and converged:
            break
        if r >= r_max:
            break
        h_next = Objective(mats, r + 1, backend=backend, preconditioner=preconditioner)
        Y_next, status = lift_and_escape(h_next, Y, v, grad_tol, st_cfg)
        level.escape_status = status
        if status != "ok":
            log.warning("saddle escape failed at rank %d", r)
            break
        Y, r = Y_next, r + 1

    R = round_solution(Y, mats.d, cost=lambda R: float(np.vdot(apply_Q(mats, R), R)))
    cert = make_certificate(mats, Y, R, eig_tol, st_cfg.gap_tol, lam, v, converged, grad_norm, len(levels), h)
    return Y, cert, levels
