import numpy as np
import pytest

from posesync.experiments import (
    CubeConfig,
    chordal_initialization,
    chordal_rotations,
    evaluate_metrics,
    generate_cube,
    lattice_path,
    loop_closure_candidates,
)
from posesync.graph import MeasurementGraph, PoseEstimate, PoseMeasurement, dumps_g2o
from posesync.matrices import build_data_matrices, evaluate_full_cost
from posesync.objective import Objective
from posesync.pipeline import solve
from posesync.rotations import angle, exp_so, random_rotation
from posesync.rounding import align_gauge
from posesync.stiefel import StiefelProduct


@pytest.mark.parametrize("kwargs", [dict(s=1), dict(p_lc=1.5), dict(sigma_r=-1), dict(d=4), dict(lc_radius=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        CubeConfig(**kwargs)


@pytest.mark.parametrize("s, d", [(2, 2), (3, 2), (2, 3), (4, 3)])
def test_lattice_path_is_a_hamiltonian_walk(s, d):
    pts = lattice_path(s, d)
    assert len(pts) == s**d
    assert len({tuple(p) for p in pts}) == s**d
    steps = np.abs(np.diff(pts, axis=0)).sum(axis=1)
    assert np.all(steps == 1)


def test_pure_odometry_chain():
    g, gt = generate_cube(CubeConfig(s=2, p_lc=0.0))
    assert (g.n, g.m) == (8, 7)
    assert all(e.head == e.tail + 1 for e in g.edges)


def test_zero_noise_ground_truth_cost():
    g, gt = generate_cube(CubeConfig(s=3, sigma_r=0, sigma_t=0))
    assert evaluate_full_cost(g, gt) <= 1e-20


def test_determinism():
    cfg = CubeConfig(s=4, seed=9)
    assert dumps_g2o(generate_cube(cfg)[0]) == dumps_g2o(generate_cube(cfg)[0])
    assert dumps_g2o(generate_cube(cfg)[0]) != dumps_g2o(generate_cube(CubeConfig(s=4, seed=10))[0])


def test_precisions_follow_noise():
    g, _ = generate_cube(CubeConfig(s=2, sigma_r=0.1, sigma_t=0.5))
    assert g.edges[0].tau == pytest.approx(4.0)
    assert g.edges[0].kappa == pytest.approx(100.0)


def test_loop_closure_count_is_binomial():
    s, p = 10, 0.1
    candidates = len(loop_closure_candidates(s, 3))
    counts = [generate_cube(CubeConfig(s=s, p_lc=p, seed=k))[0].m - (s**3 - 1) for k in range(100)]
    mean = np.mean(counts)
    sigma = np.sqrt(candidates * p * (1 - p) / 100)
    assert abs(mean - candidates * p) <= 3 * sigma


def test_rotation_noise_statistics():
    # mean angle of exp(sigma * N(0, I_3)) is the chi(3) mean times sigma
    rng = np.random.default_rng(0)
    sigma = 0.1
    angles = np.array([angle(exp_so(sigma * rng.standard_normal(3), 3)) for _ in range(10000)])
    expected = sigma * 2 * np.sqrt(2 / np.pi)
    assert abs(angles.mean() - expected) <= 3 * angles.std() / np.sqrt(angles.size)


def test_chordal_zero_noise_recovers_rotations():
    g, gt = generate_cube(CubeConfig(s=3, sigma_r=0, sigma_t=0, p_lc=0.3))
    R = chordal_rotations(build_data_matrices(g))
    blocks = R.reshape(3, g.n, 3).transpose(1, 0, 2)
    gauge = gt.rotations[0]
    np.testing.assert_allclose(blocks, gauge.T @ gt.rotations, atol=1e-8)


def test_chordal_single_edge():
    rng = np.random.default_rng(0)
    Rm = random_rotation(3, rng)
    g = MeasurementGraph(2, 3, [PoseMeasurement(0, 1, np.ones(3), Rm, 1.0, 2.0)])
    Y = chordal_initialization(build_data_matrices(g), 5)
    assert Y.shape == (5, 6)
    np.testing.assert_allclose(Y[:3, :3], np.eye(3), atol=1e-15)
    np.testing.assert_allclose(Y[:3, 3:], Rm, atol=1e-12)
    assert not Y[3:].any()


def test_chordal_beats_random_initialization():
    wins, seeds = 0, range(20)
    for seed in seeds:
        g, _ = generate_cube(CubeConfig(s=5, seed=seed))
        mats = build_data_matrices(g)
        h = Objective(mats, 5)
        Yc = chordal_initialization(mats, 5)
        assert h.manifold.orthonormality_error(Yc) <= 1e-12
        wins += h.cost(Yc) < h.cost(StiefelProduct(g.n, 3, 5).random_point(seed))
    assert wins >= 0.95 * len(seeds)


def test_metrics():
    rng = np.random.default_rng(0)
    g, gt = generate_cube(CubeConfig(s=2, seed=1))
    m = evaluate_metrics(gt, gt)
    assert m["rotation_error_mean"] == 0 and m["translation_rmse"] == 0
    R = gt.rotations.copy()
    R[3] = R[3] @ exp_so([0.0, 0.0, 0.2], 3)
    m = evaluate_metrics(PoseEstimate(R, gt.translations), gt, g)
    assert m["rotation_error_mean"] == pytest.approx(0.2 / g.n, abs=1e-9)
    assert m["objective_value"] > 0


def test_zero_noise_solve_metrics():
    g, gt = generate_cube(CubeConfig(s=3, sigma_r=0, sigma_t=0, seed=2))
    res = solve(g)
    assert res.certificate.is_certified
    m = evaluate_metrics(align_gauge(res.estimate, gt), gt, g)
    assert m["objective_value"] <= 1e-8
