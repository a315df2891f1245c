"""Synthetic cube-world instances, chordal initialization and error metrics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from posesync.graph import MeasurementGraph, PoseEstimate, PoseMeasurement
from posesync.kernels import SparseCholesky
from posesync.matrices import DataMatrixSet, evaluate_full_cost
from posesync.rotations import angle, exp_so, nearest_rotation, random_rotation


@dataclass(frozen=True)
class CubeConfig:
    """Grid-world parameters.  ``d = 3`` gives s^3 poses, ``d = 2`` gives s^2."""

    s: int = 10
    p_lc: float = 0.1
    sigma_r: float = 0.1
    sigma_t: float = 0.5
    seed: int = 0
    d: int = 3
    lc_radius: int = 1

    def __post_init__(self):
        if self.s < 2:
            raise ValueError("s must be at least 2")
        if not 0.0 <= self.p_lc <= 1.0:
            raise ValueError("p_lc must lie in [0, 1]")
        if self.sigma_r < 0 or self.sigma_t < 0:
            raise ValueError("noise levels must be non-negative")
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if self.lc_radius < 1:
            raise ValueError("lc_radius must be at least 1")

    @property
    def tau(self):
        return 1.0 / self.sigma_t**2 if self.sigma_t > 0 else 1.0

    @property
    def kappa(self):
        return 1.0 / self.sigma_r**2 if self.sigma_r > 0 else 1.0


def lattice_path(s, d):
    """Boustrophedon ordering of the s^d lattice; consecutive points are adjacent."""
    plane = [(x, y) for y in range(s) for x in (range(s) if y % 2 == 0 else range(s - 1, -1, -1))]
    if d == 2:
        return np.array(plane, dtype=float)
    points = []
    for z in range(s):
        layer = plane if z % 2 == 0 else plane[::-1]
        points.extend((x, y, z) for x, y in layer)
    return np.array(points, dtype=float)


def loop_closure_candidates(s, d, radius=1):
    """Non-sequential pose pairs (i < j) within lattice (Manhattan) distance ``radius``."""
    pts = lattice_path(s, d)
    diff = np.abs(pts[:, None, :] - pts[None, :, :]).sum(axis=2)
    i, j = np.nonzero(np.triu(diff <= radius, k=2))
    return list(zip(i.tolist(), j.tolist()))


def generate_cube(cfg: CubeConfig):
    """Sample a cube-world pose graph.  Returns ``(graph, ground_truth)``."""
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d
    t_true = lattice_path(cfg.s, d)
    n = len(t_true)
    R_true = np.array([random_rotation(d, rng) for _ in range(n)])

    pairs = [(k, k + 1) for k in range(n - 1)]
    for i, j in loop_closure_candidates(cfg.s, d, cfg.lc_radius):
        if rng.random() < cfg.p_lc:
            pairs.append((i, j))

    rot_dim = d * (d - 1) // 2
    edges = []
    for i, j in pairs:
        t_rel = R_true[i].T @ (t_true[j] - t_true[i])
        R_rel = R_true[i].T @ R_true[j]
        t_noisy = t_rel + cfg.sigma_t * rng.standard_normal(d)
        R_noisy = R_rel @ exp_so(cfg.sigma_r * rng.standard_normal(rot_dim), d)
        edges.append(PoseMeasurement(i, j, t_noisy, nearest_rotation(R_noisy), cfg.tau, cfg.kappa))
    graph = MeasurementGraph(n, d, edges)
    return graph, PoseEstimate(R_true, t_true)


def chordal_rotations(mats: DataMatrixSet):
    """Rotation estimate (d x dn) from the linear relaxation with R_0 = I."""
    d, dn = mats.d, mats.dn
    L = mats.L_rho.tocsc()
    L11 = L[d:, d:]
    L10 = L[d:, :d]
    X = np.zeros((dn, d))
    X[:d] = np.eye(d)
    X[d:] = SparseCholesky(L11).solve(-L10.toarray())
    blocks = X.reshape(mats.n, d, d).transpose(0, 2, 1)
    return np.ascontiguousarray(nearest_rotation(blocks).transpose(1, 0, 2).reshape(d, dn))


def chordal_initialization(mats: DataMatrixSet, r):
    """Chordal rotation estimate embedded in St(d, r)^n by zero padding."""
    R = chordal_rotations(mats)
    return np.vstack([R, np.zeros((r - mats.d, mats.dn))])


def evaluate_metrics(est: PoseEstimate, ground_truth: PoseEstimate, graph: MeasurementGraph | None = None):
    """Error statistics of an (already gauge-aligned) estimate."""
    rot_err = [angle(Ra.T @ Rb) for Ra, Rb in zip(est.rotations, ground_truth.rotations)]
    t_err = np.linalg.norm(est.translations - ground_truth.translations, axis=1)
    return {
        "objective_value": evaluate_full_cost(graph, est) if graph is not None else None,
        "rotation_error_mean": float(np.mean(rot_err)),
        "translation_rmse": float(np.sqrt(np.mean(t_err**2))),
    }
