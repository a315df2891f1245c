"""Problem instances: relative-pose measurements, the measurement graph, and
g2o / TUM trajectory input and output."""
from __future__ import annotations

import io
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from posesync.errors import DisconnectedGraphError, G2OParseError
from posesync.rotations import is_rotation, matrix_to_quat, nearest_rotation, planar, quat_to_matrix

log = logging.getLogger(__name__)

_ROTATION_TOL = 1e-9


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class PoseMeasurement:
    """A directed relative-pose observation of x_tail^{-1} x_head.

    ``tau`` is the translational precision, ``kappa`` the rotational
    concentration.
    """

    tail: int
    head: int
    t: np.ndarray
    R: np.ndarray
    tau: float
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "tail", int(self.tail))
        object.__setattr__(self, "head", int(self.head))
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "R", _frozen(self.R))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "kappa", float(self.kappa))
        if self.tail == self.head:
            raise ValueError(f"self-loop measurement on node {self.tail}")
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.kappa >= 0:
            raise ValueError(f"kappa must be non-negative, got {self.kappa}")
        d = self.R.shape[0]
        if self.R.shape != (d, d) or self.t.shape != (d,) or d not in (2, 3):
            raise ValueError("measurement shapes must be (d,) and (d, d) with d in {2, 3}")
        if not is_rotation(self.R, _ROTATION_TOL):
            raise ValueError("R is not a rotation matrix")

    @property
    def d(self):
        return self.R.shape[0]

    def inverse(self) -> "PoseMeasurement":
        return invert_measurement(self)

    def allclose(self, other, atol=1e-12):
        return (
            self.tail == other.tail
            and self.head == other.head
            and np.allclose(self.t, other.t, rtol=0, atol=atol)
            and np.allclose(self.R, other.R, rtol=0, atol=atol)
            and math.isclose(self.tau, other.tau, rel_tol=atol)
            and math.isclose(self.kappa, other.kappa, rel_tol=atol, abs_tol=atol)
        )


def invert_measurement(m: PoseMeasurement) -> PoseMeasurement:
    """The same observation expressed from the head's frame."""
    Rt = m.R.T
    return PoseMeasurement(m.head, m.tail, -Rt @ m.t, Rt, m.tau, m.kappa)


@dataclass(frozen=True, eq=False)
class PoseEstimate:
    """n poses: ``rotations`` has shape (n, d, d), ``translations`` (n, d)."""

    rotations: np.ndarray
    translations: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotations, dtype=float)
        t = np.array(self.translations, dtype=float)
        if R.ndim != 3 or R.shape[1] != R.shape[2] or t.shape != R.shape[:2]:
            raise ValueError("rotations must be (n, d, d) and translations (n, d)")
        object.__setattr__(self, "rotations", R)
        object.__setattr__(self, "translations", t)

    @property
    def n(self):
        return self.rotations.shape[0]

    @property
    def d(self):
        return self.rotations.shape[1]

    def rotation_block(self):
        """Rotations as the d x dn block row (R_1 ... R_n)."""
        return np.ascontiguousarray(self.rotations.transpose(1, 0, 2).reshape(self.d, -1))

    @classmethod
    def from_blocks(cls, R, t):
        R = np.asarray(R, dtype=float)
        d = R.shape[0]
        n = R.shape[1] // d
        return cls(R.reshape(d, n, d).transpose(1, 0, 2), np.asarray(t, dtype=float).reshape(n, d))


def check_connectivity(n, edges):
    """Connectivity of the undirected graph on ``n`` nodes.

    ``edges`` holds measurements or ``(i, j)`` pairs.  Returns
    ``(connected, labels)`` with one component label per node.
    """
    pairs = [(e.tail, e.head) if isinstance(e, PoseMeasurement) else tuple(e) for e in edges]
    if n == 0:
        return True, np.zeros(0, dtype=int)
    if pairs:
        i, j = np.array(pairs, dtype=int).T
    else:
        i = j = np.zeros(0, dtype=int)
    adj = sp.coo_matrix((np.ones(len(i)), (i, j)), shape=(n, n))
    ncomp, labels = connected_components(adj, directed=False)
    return ncomp == 1, labels


def merge_measurements(group):
    """Fuse measurements of one node pair into a single measurement.

    Everything is expressed in the orientation of the first measurement;
    translations are precision-weighted, rotations chordal-averaged.
    """
    ref = group[0]
    aligned = [m if m.tail == ref.tail else invert_measurement(m) for m in group]
    tau = sum(m.tau for m in aligned)
    kappa = sum(m.kappa for m in aligned)
    t = sum(m.tau * m.t for m in aligned) / tau
    weights = [m.kappa for m in aligned] if kappa > 0 else [1.0] * len(aligned)
    R = nearest_rotation(sum(w * m.R for w, m in zip(weights, aligned)))
    return PoseMeasurement(ref.tail, ref.head, t, R, tau, kappa)


@dataclass(frozen=True, eq=False)
class MeasurementGraph:
    """A connected pose graph with one directed measurement per node pair.

    ``ids[k]`` is the original (file) id of node ``k``.  ``initial`` holds
    optional initialization hints parsed from vertex records.
    """

    n: int
    d: int
    edges: tuple
    ids: tuple = None
    initial: PoseEstimate | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.ids is None:
            object.__setattr__(self, "ids", tuple(range(self.n)))
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        if len(self.ids) != self.n or len(set(self.ids)) != self.n:
            raise ValueError("ids must be n distinct integers")
        seen = set()
        for e in self.edges:
            if e.d != self.d:
                raise ValueError(f"measurement dimension {e.d} does not match d={self.d}")
            if not (0 <= e.tail < self.n and 0 <= e.head < self.n):
                raise ValueError(f"edge ({e.tail}, {e.head}) out of range for n={self.n}")
            key = frozenset((e.tail, e.head))
            if key in seen:
                raise ValueError(f"duplicate measurement between {e.tail} and {e.head}")
            seen.add(key)
        connected, labels = check_connectivity(self.n, self.edges)
        if not connected:
            raise DisconnectedGraphError(
                f"measurement graph has {labels.max() + 1} connected components"
            )

    @property
    def m(self):
        return len(self.edges)

    def index_of(self, original_id):
        return self.ids.index(int(original_id))

    @classmethod
    def from_measurements(cls, n, d, measurements, ids=None, initial=None):
        """Build a graph, dropping self-loops and merging duplicate pairs."""
        groups = defaultdict(list)
        order = []
        for m in measurements:
            if m.tail == m.head:
                log.warning("dropping self-loop measurement on node %d", m.tail)
                continue
            key = frozenset((m.tail, m.head))
            if key not in groups:
                order.append(key)
            groups[key].append(m)
        edges = []
        for key in order:
            group = groups[key]
            if len(group) > 1:
                log.warning("merging %d measurements between nodes %s", len(group), sorted(key))
                edges.append(merge_measurements(group))
            else:
                edges.append(group[0])
        return cls(n, d, edges, ids=ids, initial=initial)


# -- information matrix reduction -------------------------------------------


def _isotropic(info_t, info_r, d):
    tau = d / np.trace(np.linalg.inv(info_t))
    kappa = (d * (d - 1) / 2) / np.trace(np.linalg.inv(info_r))
    return tau, kappa


def _langevin(info_t, info_r, d):
    # Small-angle match of the isotropic Langevin density exp(kappa tr(R)).
    tau = d / np.trace(np.linalg.inv(info_t))
    kappa = (d * (d - 1) / 4) / np.trace(np.linalg.inv(info_r))
    return tau, kappa


PRECISION_CONVENTIONS = {"isotropic": _isotropic, "langevin": _langevin}


def information_to_precisions(info, d, convention="isotropic"):
    """Reduce a full pose information matrix to scalar (tau, kappa).

    The translational block comes first, then the rotational block.
    """
    info = np.asarray(info, dtype=float)
    try:
        np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise ValueError("information matrix is not positive definite") from None
    info_t = info[:d, :d]
    info_r = info[d:, d:]
    return PRECISION_CONVENTIONS[convention](info_t, info_r, d)


def _upper_to_full(values, size):
    M = np.zeros((size, size))
    M[np.triu_indices(size)] = values
    return M + np.triu(M, 1).T


# -- g2o ----------------------------------------------------------------------

_EDGE_TOKENS = {"EDGE_SE3:QUAT": (3, 9 + 21), "EDGE_SE2": (2, 5 + 6)}
_VERTEX_TOKENS = {"VERTEX_SE3:QUAT": (3, 8), "VERTEX_SE2": (2, 4)}
_IGNORED = {"FIX"}


def _open_text(source):
    if isinstance(source, (str, os.PathLike)):
        return open(source, "r", encoding="utf-8"), True
    return source, False


def _quat(values, lineno):
    q = np.asarray(values, dtype=float)
    norm = np.linalg.norm(q)
    if norm == 0:
        raise G2OParseError("zero quaternion", lineno)
    if abs(norm - 1.0) > 1e-6:
        log.warning("line %d: renormalizing quaternion with norm %.9f", lineno, norm)
    q = q / norm
    return quat_to_matrix(*q)


def parse_g2o(source, convention="isotropic") -> MeasurementGraph:
    """Read a 2D (EDGE_SE2) or 3D (EDGE_SE3:QUAT) pose graph.

    ``source`` is a path or a text stream.  Node ids are re-indexed to
    0..n-1 in increasing order of the original ids.
    """
    stream, owned = _open_text(source)
    raw_edges = []
    vertices = {}
    dims = set()
    try:
        for lineno, line in enumerate(stream, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            tag = tokens[0]
            if tag in _EDGE_TOKENS:
                d, count = _EDGE_TOKENS[tag]
            elif tag in _VERTEX_TOKENS:
                d, count = _VERTEX_TOKENS[tag]
            elif tag in _IGNORED:
                continue
            else:
                log.warning("line %d: skipping unsupported record %s", lineno, tag)
                continue
            if len(tokens) - 1 != count:
                raise G2OParseError(f"{tag} expects {count} fields, got {len(tokens) - 1}", lineno)
            try:
                values = [float(v) for v in tokens[1:]]
            except ValueError:
                raise G2OParseError(f"non-numeric field in {tag}", lineno) from None
            dims.add(d)
            if len(dims) > 1:
                raise G2OParseError("mixed 2D and 3D records", lineno)
            if tag in _VERTEX_TOKENS:
                vid = _as_id(values[0], lineno)
                if d == 3:
                    vertices[vid] = (np.array(values[1:4]), _quat(values[4:8], lineno))
                else:
                    vertices[vid] = (np.array(values[1:3]), planar(values[3]))
                continue
            i, j = _as_id(values[0], lineno), _as_id(values[1], lineno)
            if d == 3:
                t = np.array(values[2:5])
                R = _quat(values[5:9], lineno)
                info = _upper_to_full(values[9:], 6)
            else:
                t = np.array(values[2:4])
                R = planar(values[4])
                info = _upper_to_full(values[5:], 3)
            try:
                tau, kappa = information_to_precisions(info, d, convention)
            except ValueError as exc:
                raise G2OParseError(str(exc), lineno) from None
            raw_edges.append((i, j, t, R, tau, kappa, lineno))
    finally:
        if owned:
            stream.close()

    if not raw_edges:
        raise G2OParseError("no EDGE_SE2 or EDGE_SE3:QUAT records found")
    d = dims.pop()
    original = sorted({e[0] for e in raw_edges} | {e[1] for e in raw_edges} | set(vertices))
    index = {vid: k for k, vid in enumerate(original)}
    measurements = []
    for i, j, t, R, tau, kappa, lineno in raw_edges:
        if i == j:
            log.warning("line %d: dropping self-loop on vertex %d", lineno, i)
            continue
        measurements.append(PoseMeasurement(index[i], index[j], t, R, tau, kappa))
    initial = None
    if vertices and len(vertices) == len(original):
        initial = PoseEstimate(
            np.array([vertices[v][1] for v in original]),
            np.array([vertices[v][0] for v in original]),
        )
    return MeasurementGraph.from_measurements(len(original), d, measurements, ids=original, initial=initial)


def _as_id(value, lineno):
    if value != int(value):
        raise G2OParseError(f"non-integer vertex id {value}", lineno)
    return int(value)


def _fmt(x):
    return repr(float(x))


def _vertex_line(d, vid, R, t):
    if d == 3:
        q = matrix_to_quat(R)
        return "VERTEX_SE3:QUAT " + " ".join([str(vid)] + [_fmt(v) for v in (*t, *q)])
    theta = np.arctan2(R[1, 0], R[0, 0])
    return "VERTEX_SE2 " + " ".join([str(vid)] + [_fmt(v) for v in (*t, theta)])


def write_g2o(graph: MeasurementGraph, target, estimate: PoseEstimate | None = None):
    """Write ``graph`` (and optionally vertex estimates) in g2o format.

    Information matrices are written as diag(tau I, kappa I), which the
    isotropic reduction maps back to the same (tau, kappa).
    """
    stream, owned = (open(target, "w", encoding="utf-8"), True) if isinstance(target, (str, os.PathLike)) else (target, False)
    d = graph.d
    try:
        if estimate is not None:
            for k in range(graph.n):
                stream.write(_vertex_line(d, graph.ids[k], estimate.rotations[k], estimate.translations[k]) + "\n")
        rot_dim = d * (d - 1) // 2
        for e in graph.edges:
            info = np.diag([e.tau] * d + [e.kappa] * rot_dim)
            upper = info[np.triu_indices(d + rot_dim)]
            ids = [str(graph.ids[e.tail]), str(graph.ids[e.head])]
            if d == 3:
                q = matrix_to_quat(e.R)
                fields = ids + [_fmt(v) for v in (*e.t, *q, *upper)]
                stream.write("EDGE_SE3:QUAT " + " ".join(fields) + "\n")
            else:
                theta = np.arctan2(e.R[1, 0], e.R[0, 0])
                fields = ids + [_fmt(v) for v in (*e.t, theta, *upper)]
                stream.write("EDGE_SE2 " + " ".join(fields) + "\n")
    finally:
        if owned:
            stream.close()


def dumps_g2o(graph, estimate=None):
    buf = io.StringIO()
    write_g2o(graph, buf, estimate)
    return buf.getvalue()


# -- trajectories -------------------------------------------------------------


def write_tum(estimate: PoseEstimate, target, ids=None):
    """Write ``id tx ty tz qx qy qz qw`` lines; planar poses get z = 0."""
    ids = range(estimate.n) if ids is None else ids
    stream, owned = (open(target, "w", encoding="utf-8"), True) if isinstance(target, (str, os.PathLike)) else (target, False)
    try:
        for vid, R, t in zip(ids, estimate.rotations, estimate.translations):
            if estimate.d == 2:
                R3 = np.eye(3)
                R3[:2, :2] = R
                R, t = R3, np.append(t, 0.0)
            q = matrix_to_quat(R)
            stream.write(" ".join([str(vid)] + [_fmt(v) for v in (*t, *q)]) + "\n")
    finally:
        if owned:
            stream.close()


def write_trajectory(estimate, path, ids=None):
    """Write a trajectory as g2o vertices (``.g2o``) or TUM lines (anything else)."""
    ids = list(range(estimate.n)) if ids is None else list(ids)
    if str(path).endswith(".g2o"):
        with open(path, "w", encoding="utf-8") as fh:
            for k in range(estimate.n):
                fh.write(_vertex_line(estimate.d, ids[k], estimate.rotations[k], estimate.translations[k]) + "\n")
    else:
        write_tum(estimate, path, ids)


def read_trajectory(path, graph: MeasurementGraph) -> PoseEstimate:
    """Read a trajectory for ``graph`` from g2o vertex lines or TUM lines.

    Poses are matched to graph nodes through the original ids.
    """
    d = graph.d
    poses = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            tokens = line.split()
            if not tokens or tokens[0].startswith("#"):
                continue
            if tokens[0] in _VERTEX_TOKENS:
                vd, count = _VERTEX_TOKENS[tokens[0]]
                values = [float(v) for v in tokens[1:]]
                if vd != d or len(values) != count:
                    raise G2OParseError(f"bad {tokens[0]} record", lineno)
                if d == 3:
                    poses[_as_id(values[0], lineno)] = (np.array(values[1:4]), _quat(values[4:8], lineno))
                else:
                    poses[_as_id(values[0], lineno)] = (np.array(values[1:3]), planar(values[3]))
            elif tokens[0].startswith(("EDGE", "VERTEX", "FIX")):
                continue
            else:
                if len(tokens) != 8:
                    raise G2OParseError("TUM lines need 8 fields: id tx ty tz qx qy qz qw", lineno)
                try:
                    values = [float(v) for v in tokens]
                except ValueError:
                    raise G2OParseError("non-numeric TUM field", lineno) from None
                R = _quat(values[4:8], lineno)
                t = np.array(values[1:4])
                if d == 2:
                    R, t = R[:2, :2], t[:2]
                poses[_as_id(values[0], lineno)] = (t, R)
    missing = [vid for vid in graph.ids if vid not in poses]
    if missing:
        raise ValueError(f"trajectory is missing {len(missing)} poses (first: {missing[0]})")
    return PoseEstimate(
        np.array([poses[v][1] for v in graph.ids]),
        np.array([poses[v][0] for v in graph.ids]),
    )
