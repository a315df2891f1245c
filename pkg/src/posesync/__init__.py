"""Certifiably correct pose-graph optimization via a semidefinite relaxation.

The main entry points are :func:`solve` (estimate plus optimality
certificate) and :func:`certify_estimate` (check a given estimate).
"""
from posesync.errors import (
    DisconnectedGraphError,
    G2OParseError,
    NotPositiveDefiniteError,
    PoseSyncError,
    RetractionError,
)
from posesync.experiments import CubeConfig, chordal_initialization, evaluate_metrics, generate_cube
from posesync.graph import MeasurementGraph, PoseEstimate, PoseMeasurement, parse_g2o, write_g2o
from posesync.kernels import BACKEND_NAME, SparseCholesky
from posesync.matrices import DataMatrixSet, apply_Q, build_data_matrices, evaluate_full_cost, recover_translations
from posesync.objective import Objective
from posesync.pipeline import SCHEMA_VERSION, SolveResult, certify_estimate, solve
from posesync.rounding import align_gauge, round_solution
from posesync.rtr import RtrConfig, solve_rtr
from posesync.staircase import Certificate, StaircaseConfig, min_eig, riemannian_staircase
from posesync.stiefel import StiefelProduct

__version__ = "0.1.0"

__all__ = [
    "BACKEND_NAME",
    "Certificate",
    "CubeConfig",
    "DataMatrixSet",
    "DisconnectedGraphError",
    "G2OParseError",
    "MeasurementGraph",
    "NotPositiveDefiniteError",
    "Objective",
    "PoseEstimate",
    "PoseMeasurement",
    "PoseSyncError",
    "RetractionError",
    "RtrConfig",
    "SCHEMA_VERSION",
    "SolveResult",
    "SparseCholesky",
    "StaircaseConfig",
    "StiefelProduct",
    "align_gauge",
    "apply_Q",
    "build_data_matrices",
    "certify_estimate",
    "chordal_initialization",
    "evaluate_full_cost",
    "evaluate_metrics",
    "generate_cube",
    "min_eig",
    "parse_g2o",
    "recover_translations",
    "riemannian_staircase",
    "round_solution",
    "solve",
    "solve_rtr",
    "write_g2o",
]
