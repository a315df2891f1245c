"""Rounding low-rank solutions to SO(d)^n and rigid gauge alignment."""
import logging
import math

import numpy as np

from posesync.graph import PoseEstimate
from posesync.rotations import nearest_rotation

log = logging.getLogger(__name__)


def round_solution(Y, d, cost=None):
    """Map Y in St(d, r)^n to a block rotation matrix R in SO(d)^n (d x dn).

    Takes the rank-d truncated SVD ``Sigma_d V_d^T`` of ``Y``, reflects it
    if fewer than half of its blocks have positive determinant, and
    projects each block onto SO(d).  With ``n`` even and an exact tie in
    the determinant vote, both orientations are rounded and the one with
    lower ``cost(R)`` wins (``cost`` is required for that case to matter;
    without it the unreflected one is kept).
    """
    Y = np.asarray(Y, dtype=float)
    dn = Y.shape[1]
    n = dn // d
    _, s, Vt = np.linalg.svd(Y, full_matrices=False)
    if s.size < d or s[d - 1] <= 1e-12 * max(s[0], 1.0):
        log.warning("degenerate rank-%d SVD while rounding (sigma_d = %.3g)", d, s[d - 1] if s.size >= d else 0.0)
    R = s[:d, None] * Vt[:d]
    blocks = R.reshape(d, n, d).transpose(1, 0, 2)
    n_pos = int(np.sum(np.linalg.det(blocks) > 0))
    flip = np.ones(d)
    flip[-1] = -1.0

    def project(B):
        return np.ascontiguousarray(nearest_rotation(B).transpose(1, 0, 2).reshape(d, dn))

    half = math.ceil(n / 2)
    if n % 2 == 0 and n_pos == n // 2 and cost is not None:
        plain = project(blocks)
        flipped = project(flip[None, :, None] * blocks)
        return flipped if cost(flipped) < cost(plain) else plain
    if n_pos < half:
        blocks = flip[None, :, None] * blocks
    return project(blocks)


def _rigid_transform(est, ref):
    """Global (R_g, t_g) minimizing sum |R_g t_i + t_g - t'_i|^2.

    When the centered translations do not pin down the rotation (fewer than
    d - 1 independent directions, e.g. a straight-line trajectory) the
    rotation blocks are added to the cross-covariance to resolve it.
    """
    a, b = est.translations, ref.translations
    a_bar, b_bar = a.mean(axis=0), b.mean(axis=0)
    H = (b - b_bar).T @ (a - a_bar)
    s = np.linalg.svd(H, compute_uv=False)
    d = H.shape[0]
    if d > 1 and s[d - 2] <= 1e-9 * max(s[0], 1e-300):
        H = H + np.einsum("nij,nkj->ik", ref.rotations, est.rotations)
    R_g = nearest_rotation(H)
    t_g = b_bar - R_g @ a_bar
    return R_g, t_g


def apply_transform(est, R_g, t_g):
    return PoseEstimate(R_g @ est.rotations, est.translations @ R_g.T + t_g)


def align_gauge(est: PoseEstimate, ref: PoseEstimate) -> PoseEstimate:
    """Apply the single rigid motion that best aligns ``est`` with ``ref``.

    The alignment is the closed-form Procrustes fit of the translations
    (rotations only break ties for degenerate, e.g. collinear, trajectories).
    """
    if est.n != ref.n or est.d != ref.d:
        raise ValueError("estimates must have the same n and d")
    return apply_transform(est, *_rigid_transform(est, ref))


def alignment_residual(est, ref):
    """Sum of squared translation distances (the quantity align_gauge minimizes)."""
    return float(np.sum((est.translations - ref.translations) ** 2))
