"""Rigid transforms with scalar-first unit quaternions (w, x, y, z).

Rotations act on column vectors about the world origin.
"""
import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, InvalidPoseError, InvalidTransformError

QUAT_TOL = 1e-9
# apply_pose accepts quaternions this close to unit norm without complaint
QUAT_ACCEPT_TOL = 1e-6


def _vec(x, n):
    a = np.array(x, dtype=np.float64).reshape(n)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("non-finite vector")
    return a


def normalize_quat(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0:
        raise InvalidPoseError("cannot normalise a zero or non-finite quaternion")
    return q / n


def quat_multiply(a, b):
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q):
    """Rotation matrix of a unit quaternion."""
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def rotated_point_jacobian(q, points):
    """d(R(q) p)/dq for unit ``q``, evaluated at each row of ``points``.

    Returns shape (N, 3, 4). This is the derivative of the unit-quaternion
    matrix formula; use ``normalized_quat_jacobian`` to chain through a
    normalisation.
    """
    w, x, y, z = q
    p = np.atleast_2d(points)
    px, py, pz = p[:, 0], p[:, 1], p[:, 2]
    jac = np.empty((p.shape[0], 3, 4))
    # row 0: (1-2y^2-2z^2) px + 2(xy - wz) py + 2(xz + wy) pz
    jac[:, 0, 0] = 2 * (-z * py + y * pz)
    jac[:, 0, 1] = 2 * (y * py + z * pz)
    jac[:, 0, 2] = 2 * (-2 * y * px + x * py + w * pz)
    jac[:, 0, 3] = 2 * (-2 * z * px - w * py + x * pz)
    # row 1: 2(xy + wz) px + (1-2x^2-2z^2) py + 2(yz - wx) pz
    jac[:, 1, 0] = 2 * (z * px - x * pz)
    jac[:, 1, 1] = 2 * (y * px - 2 * x * py - w * pz)
    jac[:, 1, 2] = 2 * (x * px + z * pz)
    jac[:, 1, 3] = 2 * (w * px - 2 * z * py + y * pz)
    # row 2: 2(xz - wy) px + 2(yz + wx) py + (1-2x^2-2y^2) pz
    jac[:, 2, 0] = 2 * (-y * px + x * py)
    jac[:, 2, 1] = 2 * (z * px + w * py - 2 * x * pz)
    jac[:, 2, 2] = 2 * (-w * px + z * py - 2 * y * pz)
    jac[:, 2, 3] = 2 * (x * px + y * py)
    return jac


def normalized_quat_jacobian(q_raw):
    """d(q / |q|)/dq as a 4x4 matrix."""
    n = np.linalg.norm(q_raw)
    u = q_raw / n
    return (np.eye(4) - np.outer(u, u)) / n


def axis_angle_to_quat(rotvec):
    rotvec = np.asarray(rotvec, dtype=np.float64)
    angle = np.linalg.norm(rotvec)
    if angle < 1e-15:
        # second-order series keeps the result smooth near zero
        return normalize_quat(np.concatenate([[1.0 - angle ** 2 / 8.0], 0.5 * rotvec]))
    axis = rotvec / angle
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def quat_angle(a, b):
    """Rotation angle (rad) between two unit quaternions."""
    d = abs(float(np.dot(normalize_quat(a), normalize_quat(b))))
    return 2.0 * np.arccos(min(1.0, d))


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "rotation", _vec(self.rotation, 4))
        object.__setattr__(self, "translation", _vec(self.translation, 3))

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_params(cls, params):
        params = np.asarray(params, dtype=np.float64)
        return cls(normalize_quat(params[:4]), params[4:7])

    def params(self):
        return np.concatenate([self.rotation, self.translation])

    def normalized(self):
        return Pose(normalize_quat(self.rotation), self.translation)

    def matrix(self):
        return quat_to_matrix(self.rotation)

    def inverse(self):
        q = normalize_quat(self.rotation)
        qi = quat_conjugate(q)
        return Pose(qi, -quat_to_matrix(qi) @ self.translation)

    def transform_points(self, points):
        return np.asarray(points) @ self.matrix().T + self.translation


@dataclass(frozen=True)
class RegistrationTransform:
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0, 0, 0]))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "rotation", _vec(self.rotation, 4))
        object.__setattr__(self, "translation", _vec(self.translation, 3))
        if not (np.isfinite(self.scale) and self.scale > 0):
            raise InvalidTransformError(f"scale must be > 0, got {self.scale}")
        object.__setattr__(self, "scale", float(self.scale))

    def pose(self):
        return Pose(self.rotation, self.translation)


def _checked_rotation(q):
    n = np.linalg.norm(q)
    if abs(n - 1.0) > QUAT_ACCEPT_TOL:
        raise InvalidPoseError(f"quaternion norm {n:.12g} is not 1")
    return quat_to_matrix(q / n)


def apply_pose(pose, cloud):
    """Rigidly move a cloud: positions R mu + t, covariances R S R^T."""
    rot = _checked_rotation(pose.rotation)
    pos = cloud.positions @ rot.T + pose.translation
    if cloud.is_isotropic:
        return cloud.replace(positions=pos)
    cov = rot @ cloud.covariances @ rot.T
    return cloud.replace(positions=pos, covariances=cov)


def apply_registration(reg, cloud):
    """Similarity transform: positions s R mu + t, radii * s, covariances * s^2."""
    if not reg.scale > 0:
        raise InvalidTransformError("scale must be > 0")
    rot = _checked_rotation(reg.rotation)
    s = reg.scale
    pos = s * (cloud.positions @ rot.T) + reg.translation
    if cloud.is_isotropic:
        return cloud.replace(positions=pos, radii=cloud.radii * s)
    cov = (s * s) * (rot @ cloud.covariances @ rot.T)
    return cloud.replace(positions=pos, covariances=cov)


def scale_cloud(cloud, s):
    return apply_registration(RegistrationTransform(scale=s), cloud)


def compose(a, b):
    """Pose applying ``b`` first, then ``a``."""
    qa = normalize_quat(a.rotation)
    q = normalize_quat(quat_multiply(qa, normalize_quat(b.rotation)))
    t = quat_to_matrix(qa) @ b.translation + a.translation
    return Pose(q, t)


def pose_delta_translation(prev, cur):
    return cur.translation - prev.translation


POSE_CSV_HEADER = ["frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz"]


def write_pose_csv(path, poses):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(POSE_CSV_HEADER)
        for i, p in enumerate(poses):
            w.writerow([i] + [repr(float(v)) for v in p.params()])


def read_pose_csv(path):
    poses = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            q = [float(row[k]) for k in ("qw", "qx", "qy", "qz")]
            t = [float(row[k]) for k in ("tx", "ty", "tz")]
            poses.append((int(row["frame"]), Pose(q, t)))
    poses.sort(key=lambda fp: fp[0])
    return [p for _, p in poses]
