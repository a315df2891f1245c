"""End-to-end solve: staircase, rounding, translation recovery, certificate."""
from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np

from posesync.experiments import chordal_initialization
from posesync.graph import MeasurementGraph, PoseEstimate
from posesync.matrices import DataMatrixSet, apply_Q, build_data_matrices, recover_translations
from posesync.objective import Objective
from posesync.rotations import is_rotation, nearest_rotation
from posesync.rounding import round_solution
from posesync.rtr import RtrConfig
from posesync.staircase import (
    Certificate,
    StaircaseConfig,
    min_eig,
    riemannian_staircase,
)
from posesync.stiefel import StiefelProduct

SCHEMA_VERSION = "1.0"


@dataclass
class SolveResult:
    estimate: PoseEstimate
    certificate: Certificate
    levels: list
    timings: dict
    config: dict
    seed: int
    ids: tuple = ()
    Y: np.ndarray | None = field(default=None, repr=False)
    mats: DataMatrixSet | None = field(default=None, repr=False)

    @property
    def objective(self):
        return self.certificate.rounded_value

    def to_dict(self):
        est = self.estimate
        return {
            "schema_version": SCHEMA_VERSION,
            "n": est.n,
            "d": est.d,
            "objective": self.objective,
            "certificate": self.certificate.to_dict(),
            "levels": [
                {
                    "rank": lv.rank,
                    "cost": lv.cost,
                    "grad_norm": lv.grad_norm,
                    "lambda_min": lv.lambda_min,
                    "rtr_iterations": lv.rtr_iterations,
                    "inner_iterations": lv.inner_iterations,
                    "rtr_status": lv.rtr_status,
                    "escape_status": lv.escape_status,
                }
                for lv in self.levels
            ],
            "timings": self.timings,
            "config": self.config,
            "seed": self.seed,
            "estimate": {
                "ids": list(self.ids) if self.ids else list(range(est.n)),
                "rotations": est.rotations.tolist(),
                "translations": est.translations.tolist(),
            },
        }


def initial_point(mats: DataMatrixSet, r, init="random", seed=0):
    if init == "chordal":
        return chordal_initialization(mats, r)
    if init == "random":
        return StiefelProduct(mats.n, mats.d, r).random_point(seed)
    raise ValueError(f"unknown initialization {init!r}")


def solve(graph: MeasurementGraph, init="random", seed=0, rtr_cfg: RtrConfig | None = None,
          st_cfg: StaircaseConfig | None = None, backend=None, preconditioner=False, mats=None) -> SolveResult:
    """Run the full pipeline on ``graph`` and return the estimate with its certificate."""
    rtr_cfg = rtr_cfg or RtrConfig()
    st_cfg = st_cfg or dataclasses.replace(StaircaseConfig(), seed=seed)
    timings = {}
    t_start = time.perf_counter()

    t0 = time.perf_counter()
    if mats is None:
        mats = build_data_matrices(graph, backend)
    timings["build"] = time.perf_counter() - t0

    r0, r_max, eig_tol = st_cfg.resolved(mats)
    Y0 = initial_point(mats, r0, init, seed)

    t0 = time.perf_counter()
    Y, cert, levels = riemannian_staircase(mats, Y0, rtr_cfg, st_cfg, backend=backend, preconditioner=preconditioner)
    staircase_time = time.perf_counter() - t0
    timings["certify"] = sum(lv.certify_time for lv in levels)
    timings["solve"] = staircase_time - timings["certify"]

    t0 = time.perf_counter()
    R = round_solution(Y, mats.d, cost=lambda R: float(np.vdot(apply_Q(mats, R), R)))
    t = recover_translations(mats, R)
    timings["round"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - t_start

    config = {
        "init": init,
        "r0": r0,
        "r_max": r_max,
        "eig_tol": eig_tol,
        "gap_tol": st_cfg.gap_tol,
        "grad_tol": rtr_cfg.resolved(mats.dn, 1.0)[0],
        "rel_func_tol": rtr_cfg.rel_func_tol,
        "max_outer": rtr_cfg.max_outer,
        "preconditioner": preconditioner,
    }
    return SolveResult(
        estimate=PoseEstimate.from_blocks(R, t),
        certificate=cert,
        levels=levels,
        timings=timings,
        config=config,
        seed=seed,
        ids=graph.ids,
        Y=Y,
        mats=mats,
    )


def certify_estimate(graph: MeasurementGraph, candidate: PoseEstimate, st_cfg: StaircaseConfig | None = None,
                     grad_tol=None, mats=None):
    """Check global optimality of an externally supplied estimate.

    Only the rotations matter: translations are eliminated analytically.
    Returns ``(certificate, warnings)``.  The lower bound used for the gap
    is the dual bound ``F(R) + dn * min(lambda_min, 0)``.
    """
    st_cfg = st_cfg or StaircaseConfig()
    mats = mats or build_data_matrices(graph)
    warnings = []
    rotations = candidate.rotations
    if not all(is_rotation(R, 1e-6) for R in rotations):
        warnings.append("candidate contains non-rotation blocks; projected onto SO(d)")
        rotations = nearest_rotation(rotations)
    R = PoseEstimate(rotations, candidate.translations).rotation_block()
    h = Objective(mats, mats.d)
    grad_norm = h.manifold.norm(h.gradient(R))
    if grad_tol is None:
        grad_tol = RtrConfig().resolved(mats.dn, 1.0)[0]
    eig_tol = st_cfg.eig_tol if st_cfg.eig_tol is not None else 1e-5 * mats.scale()
    lam, v, converged = min_eig(mats, R, st_cfg)
    cost = h.cost(R)
    dual_bound = cost + mats.dn * min(lam, 0.0)
    rel_gap = (cost - dual_bound) / max(1.0, abs(dual_bound))
    critical = grad_norm <= 10 * grad_tol
    if not critical:
        warnings.append(f"candidate is not a critical point (|grad| = {grad_norm:.3g})")
    cert = Certificate(
        lambda_min=lam,
        eigvec=v,
        sdp_value=dual_bound,
        rounded_value=cost,
        rel_gap=rel_gap,
        is_certified=bool(critical and converged and lam >= -eig_tol and rel_gap <= st_cfg.gap_tol),
        dual_bound=dual_bound,
        grad_norm=grad_norm,
        eig_converged=converged,
        levels=0,
    )
    return cert, warnings
