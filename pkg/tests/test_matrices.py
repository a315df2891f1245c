import numpy as np
import pytest
import scipy.io

from posesync.experiments import CubeConfig, generate_cube
from posesync.graph import MeasurementGraph, PoseEstimate, PoseMeasurement
from posesync.matrices import apply_Q, build_data_matrices, evaluate_full_cost, recover_translations
from posesync.stiefel import StiefelProduct

from oracles import dense_cost, dense_Q, random_instance


def single_edge(d=2, t=None, R=None, tau=1.0, kappa=1.0):
    t = np.zeros(d) if t is None else np.asarray(t, dtype=float)
    R = np.eye(d) if R is None else R
    return MeasurementGraph(2, d, [PoseMeasurement(0, 1, t, R, tau, kappa)])


def test_two_node_laplacians():
    mats = build_data_matrices(single_edge(2))
    np.testing.assert_array_equal(mats.L_tau.toarray(), [[1, -1], [-1, 1]])
    I = np.eye(2)
    np.testing.assert_array_equal(mats.L_rho.toarray(), np.block([[I, -I], [-I, I]]))


def test_T_row_layout():
    mats = build_data_matrices(single_edge(2, t=[0.3, -0.7]))
    np.testing.assert_array_equal(mats.T.toarray(), [[-0.3, 0.7, 0.0, 0.0]])


def test_V_is_incidence_times_weighted_T():
    g, _, _ = random_instance(8, 3, np.random.default_rng(2))
    mats = build_data_matrices(g)
    A = np.zeros((g.n, g.m))
    for k, e in enumerate(g.edges):
        A[e.tail, k] = -1.0
        A[e.head, k] = 1.0
    np.testing.assert_allclose(mats.V.toarray(), A @ np.diag(mats.Omega) @ mats.T.toarray(), atol=1e-14)
    np.testing.assert_allclose(mats.L_tau.toarray(), A @ np.diag(mats.Omega) @ A.T, atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("d", [2, 3])
def test_implicit_Q_matches_dense(backend, seed, d):
    rng = np.random.default_rng(seed)
    g, _, _ = random_instance(int(rng.integers(3, 30)), d, rng)
    mats = build_data_matrices(g, backend)
    Q = dense_Q(g)
    QI = apply_Q(mats, np.eye(mats.dn))
    assert np.abs(QI - Q).max() <= 1e-9
    Y = StiefelProduct(g.n, d, d + 2).random_point(seed)
    assert np.abs(apply_Q(mats, Y) - Y @ Q).max() <= 1e-9
    v = rng.standard_normal(mats.dn)
    np.testing.assert_allclose(apply_Q(mats, v), Q @ v, atol=1e-9)


def test_apply_Q_zero_and_shape(noisy_cube):
    _, _, mats = noisy_cube
    assert not apply_Q(mats, np.zeros((5, mats.dn))).any()
    with pytest.raises(ValueError):
        apply_Q(mats, np.zeros((5, mats.dn + 1)))


def test_zero_noise_ground_truth_has_zero_cost(zero_noise_cube):
    graph, gt, mats = zero_noise_cube
    R = gt.rotation_block()
    assert abs(np.vdot(apply_Q(mats, R), R)) <= 1e-9
    assert evaluate_full_cost(graph, gt) <= 1e-20


def test_recover_translations_zero_noise(zero_noise_cube):
    _, gt, mats = zero_noise_cube
    t = recover_translations(mats, gt.rotation_block())
    np.testing.assert_allclose(t, gt.translations - gt.translations[0], atol=1e-9)


def test_recover_translations_single_edge():
    mats = build_data_matrices(single_edge(3, t=[1.0, 0, 0]))
    t = recover_translations(mats, np.hstack([np.eye(3), np.eye(3)]))
    np.testing.assert_allclose(t, [[0, 0, 0], [1, 0, 0]], atol=1e-15)


@pytest.mark.parametrize("seed", range(5))
def test_recovered_translations_are_stationary(seed):
    rng = np.random.default_rng(seed)
    g, R, _ = random_instance(int(rng.integers(3, 20)), 3, rng)
    mats = build_data_matrices(g)
    t = recover_translations(mats, np.hstack(list(R)))
    grad = np.zeros_like(t)
    for e in g.edges:
        res = t[e.head] - t[e.tail] - R[e.tail] @ e.t
        grad[e.head] += 2 * e.tau * res
        grad[e.tail] -= 2 * e.tau * res
    assert np.linalg.norm(grad) <= 1e-8


def test_full_cost_single_identity_edge():
    g = single_edge(3, tau=2.5)
    I = np.stack([np.eye(3)] * 2)
    assert evaluate_full_cost(g, PoseEstimate(I, np.zeros((2, 3)))) == 0.0
    assert evaluate_full_cost(g, PoseEstimate(I, [[0, 0, 0], [1, 0, 0]])) == pytest.approx(2.5)


@pytest.mark.parametrize("seed", range(5))
def test_elimination_identity(seed):
    rng = np.random.default_rng(seed)
    g, R, _ = random_instance(int(rng.integers(3, 25)), 2 + seed % 2, rng, noise=0.3)
    mats = build_data_matrices(g)
    Rb = np.hstack(list(R))
    reduced = float(np.vdot(apply_Q(mats, Rb), Rb))
    t = recover_translations(mats, Rb)
    full = evaluate_full_cost(g, PoseEstimate(R, t))
    assert full == pytest.approx(reduced, rel=1e-8)
    assert dense_cost(g, R, t) == pytest.approx(full, rel=1e-10)


def test_dump_round_trip(tmp_path, noisy_cube):
    _, _, mats = noisy_cube
    mats.dump(tmp_path)
    L_rho = scipy.io.mmread(tmp_path / "L_rho.mtx")
    np.testing.assert_allclose(L_rho.toarray(), mats.L_rho.toarray())
    assert (tmp_path / "chol_L.mtx").exists()


def test_scale_bounds_Q_diagonal(noisy_cube):
    _, _, mats = noisy_cube
    Q = apply_Q(mats, np.eye(mats.dn))
    assert np.diag(Q).mean() <= mats.scale() + 1e-12
    assert np.all(mats.chol_diagonal > 0)


def test_cube_generator_instances():
    g, _ = generate_cube(CubeConfig(s=2, p_lc=0.0))
    assert (g.n, g.m) == (8, 7)
