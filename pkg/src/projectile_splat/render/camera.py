import json
from dataclasses import dataclass, field

import numpy as np

from ..errors import BehindCameraError, InvalidInputError
from ..se3 import Pose, normalize_quat, quat_to_matrix

MIN_DEPTH = 1e-6


@dataclass(frozen=True)
class Camera:
    """Pinhole camera. ``extrinsic`` maps world points into the camera frame."""

    focal: float
    principal_point: np.ndarray
    resolution: tuple
    extrinsic: Pose = field(default_factory=Pose)

    def __post_init__(self):
        if not self.focal > 0:
            raise InvalidInputError("focal length must be > 0")
        pp = np.array(self.principal_point, dtype=np.float64).reshape(2)
        object.__setattr__(self, "principal_point", pp)
        w, h = (int(v) for v in self.resolution)
        if w < 16 or h < 16:
            raise InvalidInputError("resolution must be at least 16 x 16")
        object.__setattr__(self, "resolution", (w, h))
        object.__setattr__(self, "focal", float(self.focal))

    @property
    def width(self):
        return self.resolution[0]

    @property
    def height(self):
        return self.resolution[1]

    @property
    def rotation(self):
        return quat_to_matrix(normalize_quat(self.extrinsic.rotation))

    def to_camera(self, points):
        return np.asarray(points, dtype=np.float64) @ self.rotation.T + self.extrinsic.translation

    def to_dict(self):
        return {
            "focal": self.focal,
            "cx": float(self.principal_point[0]),
            "cy": float(self.principal_point[1]),
            "width": self.width,
            "height": self.height,
            "extrinsic": {
                "quaternion": self.extrinsic.rotation.tolist(),
                "translation": self.extrinsic.translation.tolist(),
            },
        }

    @classmethod
    def from_dict(cls, d):
        ext = d.get("extrinsic", {})
        pose = Pose(ext.get("quaternion", [1.0, 0.0, 0.0, 0.0]),
                    ext.get("translation", [0.0, 0.0, 0.0]))
        return cls(d["focal"], (d["cx"], d["cy"]), (d["width"], d["height"]), pose)

    def to_json(self):
        return json.dumps(self.to_dict())


def project(point, cam):
    """Pinhole projection of one world point; returns (pixel, depth)."""
    p = np.asarray(point, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(p)):
        raise InvalidInputError("non-finite point")
    pc = cam.to_camera(p)
    if pc[2] <= MIN_DEPTH:
        raise BehindCameraError(f"point depth {pc[2]:.3g} is behind the camera")
    pixel = cam.focal * pc[:2] / pc[2] + cam.principal_point
    return pixel, float(pc[2])


def project_points(points, cam):
    """Vectorised projection; rows behind the camera get NaN pixels."""
    pc = cam.to_camera(points)
    depth = pc[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        pix = cam.focal * pc[:, :2] / depth[:, None] + cam.principal_point
    pix[depth <= MIN_DEPTH] = np.nan
    return pix, depth
