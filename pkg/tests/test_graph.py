import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from posesync.errors import DisconnectedGraphError, G2OParseError
from posesync.experiments import CubeConfig, generate_cube
from posesync.graph import (
    MeasurementGraph,
    PoseEstimate,
    PoseMeasurement,
    check_connectivity,
    dumps_g2o,
    information_to_precisions,
    invert_measurement,
    parse_g2o,
    read_trajectory,
    write_trajectory,
)
from posesync.rotations import (
    angle,
    exp_so,
    is_rotation,
    matrix_to_quat,
    nearest_rotation,
    quat_to_matrix,
    random_rotation,
)

IDENTITY_EDGE_3D = "EDGE_SE3:QUAT 0 1 0 0 0 0 0 0 1 " + " ".join(
    "1" if i == j else "0" for i in range(6) for j in range(i, 6)
)


def _measurement(rng, d=3, tail=0, head=1):
    return PoseMeasurement(tail, head, rng.standard_normal(d), random_rotation(d, rng),
                           rng.uniform(0.1, 10), rng.uniform(0.1, 10))


# -- rotations ---------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_nearest_rotation_is_rotation_and_fixes_rotations(seed, d):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((d, d))
    R = nearest_rotation(M)
    assert is_rotation(R, 1e-10)
    Q = random_rotation(d, rng)
    np.testing.assert_allclose(nearest_rotation(Q), Q, atol=1e-12)


def test_nearest_rotation_beats_random_rotations(rng):
    M = rng.standard_normal((3, 3))
    R = nearest_rotation(M)
    best = np.linalg.norm(R - M)
    for _ in range(200):
        assert np.linalg.norm(random_rotation(3, rng) - M) >= best - 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_quaternion_round_trip(seed):
    R = random_rotation(3, np.random.default_rng(seed))
    q = matrix_to_quat(R)
    assert q[3] >= 0
    np.testing.assert_allclose(quat_to_matrix(*q), R, atol=1e-12)


def test_exp_and_angle():
    assert angle(exp_so([0.3], 2)) == pytest.approx(0.3)
    assert angle(exp_so([0.0, 0.4, 0.0], 3)) == pytest.approx(0.4)


# -- measurements ------------------------------------------------------------

def test_invert_identity_edge_swaps_endpoints():
    m = PoseMeasurement(0, 1, np.zeros(3), np.eye(3), 1.0, 1.0)
    inv = invert_measurement(m)
    assert (inv.tail, inv.head) == (1, 0)
    np.testing.assert_array_equal(inv.R, np.eye(3))
    np.testing.assert_array_equal(inv.t, np.zeros(3))


def test_invert_pure_translation():
    m = PoseMeasurement(0, 1, [1.0, 0, 0], np.eye(3), 1.0, 1.0)
    np.testing.assert_allclose(invert_measurement(m).t, [-1.0, 0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([2, 3]))
def test_inversion_is_an_involution(seed, d):
    m = _measurement(np.random.default_rng(seed), d)
    assert invert_measurement(invert_measurement(m)).allclose(m, atol=1e-15 * 10)


@pytest.mark.parametrize("kwargs, message", [
    (dict(tail=0, head=0), "self-loop"),
    (dict(tau=0.0), "tau"),
    (dict(kappa=-1.0), "kappa"),
    (dict(R=np.diag([1.0, 1.0, -1.0])), "rotation"),
])
def test_measurement_validation(kwargs, message):
    base = dict(tail=0, head=1, t=np.zeros(3), R=np.eye(3), tau=1.0, kappa=1.0)
    base.update(kwargs)
    with pytest.raises(ValueError, match=message):
        PoseMeasurement(**base)


# -- connectivity ------------------------------------------------------------

def test_chain_is_connected():
    ok, labels = check_connectivity(3, [(0, 1), (1, 2)])
    assert ok and set(labels) == {0}


def test_two_disjoint_edges():
    ok, labels = check_connectivity(4, [(0, 1), (2, 3)])
    assert not ok
    assert list(labels) == [0, 0, 1, 1]


def test_disconnected_graph_is_rejected():
    e = [PoseMeasurement(0, 1, np.zeros(2), np.eye(2), 1, 1), PoseMeasurement(2, 3, np.zeros(2), np.eye(2), 1, 1)]
    with pytest.raises(DisconnectedGraphError):
        MeasurementGraph(4, 2, e)


@pytest.mark.parametrize("seed", range(5))
def test_cube_is_connected(seed):
    graph, _ = generate_cube(CubeConfig(s=3, p_lc=0.2, seed=seed))
    assert check_connectivity(graph.n, graph.edges)[0]


def test_duplicate_measurements_are_merged():
    m1 = PoseMeasurement(0, 1, [1.0, 0.0], np.eye(2), 1.0, 1.0)
    m2 = PoseMeasurement(1, 0, [-3.0, 0.0], np.eye(2), 1.0, 1.0)
    g = MeasurementGraph.from_measurements(2, 2, [m1, m2])
    assert g.m == 1
    e = g.edges[0]
    assert e.tau == pytest.approx(2.0)
    np.testing.assert_allclose(e.t, [2.0, 0.0])


# -- g2o I/O -----------------------------------------------------------------

def test_parse_identity_edge():
    g = parse_g2o(io.StringIO(IDENTITY_EDGE_3D + "\n"))
    assert (g.n, g.m, g.d) == (2, 1, 3)
    assert g.edges[0].tau == pytest.approx(1.0)
    assert g.edges[0].kappa == pytest.approx(1.0)
    g = parse_g2o(io.StringIO(IDENTITY_EDGE_3D + "\n"), convention="langevin")
    assert g.edges[0].kappa == pytest.approx(0.5)


def test_information_reduction_isotropic():
    info = np.diag([4.0, 4.0, 4.0, 9.0, 9.0, 9.0])
    tau, kappa = information_to_precisions(info, 3)
    assert tau == pytest.approx(4.0)
    assert kappa == pytest.approx(9.0)
    with pytest.raises(ValueError):
        information_to_precisions(-np.eye(6), 3)


def test_parse_se2_and_reindex():
    text = "\n".join([
        "VERTEX_SE2 10 0 0 0",
        "VERTEX_SE2 20 1 0 0",
        "FIX 10",
        "EDGE_SE2 10 20 1 0 0.1 1 0 0 1 0 1",
    ])
    g = parse_g2o(io.StringIO(text))
    assert g.ids == (10, 20)
    assert g.edges[0].tail == 0 and g.edges[0].head == 1
    assert angle(g.edges[0].R) == pytest.approx(0.1)
    assert g.initial is not None


@pytest.mark.parametrize("text, lineno", [
    ("EDGE_SE2 0 1 1 0 0 1 0 0\n", 1),
    ("# c\nEDGE_SE2 0 1 x 0 0 1 0 0 1 0 1\n", 2),
    ("EDGE_SE2 0 1 1 0 0 -1 0 0 1 0 1\n", 1),
])
def test_parse_errors_carry_line_numbers(text, lineno):
    with pytest.raises(G2OParseError) as info:
        parse_g2o(io.StringIO(text))
    assert info.value.lineno == lineno


def test_parse_rejects_empty_and_unknown_records(caplog):
    with pytest.raises(G2OParseError):
        parse_g2o(io.StringIO("# nothing here\n"))
    g = parse_g2o(io.StringIO("MYSTERY 1 2 3\n" + IDENTITY_EDGE_3D + "\n"))
    assert g.m == 1
    assert "unsupported" in caplog.text


@pytest.mark.parametrize("d", [2, 3])
def test_g2o_round_trip(d):
    graph, _ = generate_cube(CubeConfig(s=3, d=d, seed=7))
    again = parse_g2o(io.StringIO(dumps_g2o(graph)))
    assert (again.n, again.m) == (graph.n, graph.m)
    for a, b in zip(graph.edges, again.edges):
        assert a.allclose(b, atol=1e-12)


@pytest.mark.parametrize("d, suffix", [(2, ".g2o"), (3, ".g2o"), (3, ".tum"), (2, ".txt")])
def test_trajectory_round_trip(tmp_path, d, suffix):
    graph, gt = generate_cube(CubeConfig(s=2, d=d, seed=1))
    path = tmp_path / f"traj{suffix}"
    write_trajectory(gt, path, graph.ids)
    back = read_trajectory(path, graph)
    np.testing.assert_allclose(back.rotations, gt.rotations, atol=1e-12)
    np.testing.assert_allclose(back.translations, gt.translations, atol=1e-12)


def test_pose_estimate_blocks():
    rng = np.random.default_rng(0)
    R = np.array([random_rotation(3, rng) for _ in range(4)])
    est = PoseEstimate(R, rng.standard_normal((4, 3)))
    again = PoseEstimate.from_blocks(est.rotation_block(), est.translations)
    np.testing.assert_array_equal(again.rotations, R)
