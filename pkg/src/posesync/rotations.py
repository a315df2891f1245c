"""Small SO(d) helpers: projections, exponential map, quaternion conversion."""
import numpy as np
from scipy.spatial.transform import Rotation as _Rotation


def nearest_rotation(M):
    """Closest rotation in Frobenius norm to ``M`` (or a stack of matrices).

    SVD with the sign of the smallest singular direction corrected so the
    determinant is +1.
    """
    M = np.asarray(M, dtype=float)
    U, _, Vt = np.linalg.svd(M)
    det = np.linalg.det(U @ Vt)
    D = np.ones(M.shape[:-1])
    D[..., -1] = np.sign(det)
    D[D == 0] = 1.0
    return (U * D[..., None, :]) @ Vt


def is_rotation(R, tol=1e-10):
    R = np.asarray(R, dtype=float)
    d = R.shape[-1]
    return bool(
        np.all(np.abs(R.swapaxes(-1, -2) @ R - np.eye(d)) <= tol)
        and np.all(np.abs(np.linalg.det(R) - 1.0) <= tol)
    )


def hat3(w):
    w = np.asarray(w, dtype=float)
    return np.array(
        [[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]]
    )


def planar(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def exp_so(w, d):
    """Exponential of the tangent vector ``w`` (angle for d=2, 3-vector for d=3)."""
    if d == 2:
        return planar(float(np.ravel(w)[0]))
    return _Rotation.from_rotvec(np.asarray(w, dtype=float)).as_matrix()


def angle(R):
    """Rotation angle of ``R`` in [0, pi]."""
    R = np.asarray(R, dtype=float)
    if R.shape[-1] == 2:
        return abs(float(np.arctan2(R[1, 0], R[0, 0])))
    return float(_Rotation.from_matrix(R).magnitude())


def quat_to_matrix(qx, qy, qz, qw):
    return _Rotation.from_quat([qx, qy, qz, qw]).as_matrix()


def matrix_to_quat(R):
    """(qx, qy, qz, qw) with qw >= 0."""
    q = _Rotation.from_matrix(R).as_quat()
    return q if q[3] >= 0 else -q


def random_rotation(d, rng):
    if d == 2:
        return planar(rng.uniform(-np.pi, np.pi))
    return _Rotation.random(random_state=rng).as_matrix()
