"""Synthetic projectile scenes: procedural clouds, ballistic trajectories with
spin, rendered target frames, silhouettes and noisy centroid-flow readings."""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, OutOfViewError
from .gaussians import GaussianCloud, centroid, load_cloud, save_cloud
from .imageio import save_mask, save_rgba
from .physics import PhysicsConfig
from .render import Camera, project, splat_render
from .se3 import Pose, apply_pose, axis_angle_to_quat, quat_multiply, write_pose_csv

SHAPES = ("sphere", "box", "dumbbell")

# one colour per sign octant of the body frame, so spin is visible
OCTANT_COLORS = np.array([
    [0.90, 0.20, 0.20], [0.20, 0.80, 0.25], [0.20, 0.35, 0.90], [0.95, 0.85, 0.20],
    [0.85, 0.30, 0.85], [0.20, 0.85, 0.85], [0.95, 0.55, 0.15], [0.60, 0.60, 0.60],
])


def octant_colors(points):
    p = np.asarray(points)
    idx = (p[:, 0] >= 0).astype(int) + 2 * (p[:, 1] >= 0) + 4 * (p[:, 2] >= 0)
    return OCTANT_COLORS[idx]


def _random_rotation(rng):
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def _fibonacci_sphere(n):
    i = np.arange(n) + 0.5
    z = 1.0 - 2.0 * i / n
    rho = np.sqrt(1.0 - z * z)
    phi = np.pi * (3.0 - np.sqrt(5.0)) * i
    return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=1)


def _box_surface(n, rng, half):
    face = rng.integers(0, 6, size=n)
    uv = rng.uniform(-half, half, size=(n, 2))
    pts = np.empty((n, 3))
    axis = face // 2
    sign = np.where(face % 2 == 0, -half, half)
    for k in range(n):
        others = [a for a in range(3) if a != axis[k]]
        pts[k, axis[k]] = sign[k]
        pts[k, others] = uv[k]
    return pts


def procedural_cloud(shape, n, seed=0, diameter=1.0, opacity=0.9):
    """Isotropic kernels on the surface of a named shape, centred near the origin."""
    if shape not in SHAPES:
        raise InvalidInputError(f"unknown shape {shape!r}; choose from {SHAPES}")
    n = int(n)
    if n < 1:
        raise InvalidInputError("kernel count must be >= 1")
    rng = np.random.default_rng(seed)
    if n == 1:
        return GaussianCloud(np.zeros((1, 3)), OCTANT_COLORS[:1], [opacity], radii=[diameter / 4])
    half = diameter / 2
    if shape == "sphere":
        pts = _fibonacci_sphere(n) @ _random_rotation(rng).T * half
        area = 4 * np.pi * half * half
    elif shape == "box":
        h = half / np.sqrt(3)
        pts = _box_surface(n, rng, h)
        area = 6 * (2 * h) ** 2
    else:
        # two balls joined along x; each ball gets half the kernels
        rb = 0.3 * diameter
        c = half - rb
        n_a = n // 2
        a = _fibonacci_sphere(n_a) @ _random_rotation(rng).T * rb
        b = _fibonacci_sphere(n - n_a) @ _random_rotation(rng).T * rb
        pts = np.concatenate([a - [c, 0, 0], b + [c, 0, 0]])
        area = 2 * 4 * np.pi * rb * rb
    spacing = np.sqrt(area / n)
    radii = np.full(n, 0.5 * spacing)
    return GaussianCloud(pts, octant_colors(pts), np.full(n, opacity), radii=radii)


@dataclass(frozen=True)
class SceneConfig:
    object: dict = field(default_factory=lambda: {"shape": "sphere", "n": 96, "seed": 0})
    v0: np.ndarray = field(default_factory=lambda: np.array([3.0, 4.8, 0.0]))
    omega: np.ndarray = field(default_factory=lambda: np.array([0.6, 2.0, 1.0]))
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    camera: Camera = None
    num_frames: int = 30
    flow_noise_std: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "v0", np.array(self.v0, dtype=np.float64).reshape(3))
        object.__setattr__(self, "omega", np.array(self.omega, dtype=np.float64).reshape(3))
        if self.camera is None:
            object.__setattr__(self, "camera", default_camera())
        if int(self.num_frames) != self.num_frames or self.num_frames < 3:
            raise InvalidInputError("num_frames must be an integer >= 3")
        if self.flow_noise_std < 0:
            raise InvalidInputError("flow_noise_std must be >= 0")
        if self.physics.gravity_mag is None:
            raise InvalidInputError("the simulator needs gravity_mag")

    @property
    def dt(self):
        return self.physics.frame_dt

    def to_dict(self):
        return {"object": dict(self.object), "v0": self.v0.tolist(), "omega": self.omega.tolist(),
                "physics": self.physics.to_dict(), "camera": self.camera.to_dict(),
                "num_frames": int(self.num_frames), "flow_noise_std": float(self.flow_noise_std),
                "seed": int(self.seed)}

    @classmethod
    def from_dict(cls, d, base_dir=None):
        obj = dict(d.get("object", {"shape": "sphere", "n": 96, "seed": 0}))
        if "path" in obj and base_dir is not None and not os.path.isabs(obj["path"]):
            obj["path"] = os.path.join(base_dir, obj["path"])
        return cls(
            object=obj,
            v0=d.get("v0", [3.0, 4.8, 0.0]),
            omega=d.get("omega", [0.6, 2.0, 1.0]),
            physics=PhysicsConfig.from_dict(d.get("physics", {})),
            camera=Camera.from_dict(d["camera"]) if "camera" in d else None,
            num_frames=int(d.get("num_frames", 30)),
            flow_noise_std=float(d.get("flow_noise_std", 1.0)),
            seed=int(d.get("seed", 0)),
        )

    def with_(self, **kw):
        vals = {k: getattr(self, k) for k in self.__dataclass_fields__}
        vals.update(kw)
        return SceneConfig(**vals)


def default_camera():
    """128 x 128 camera 6 units in front of the launch arc, looking down -z, image v down."""
    return Camera(150.0, (64.0, 64.0), (128, 128),
                  Pose([0.0, 1.0, 0.0, 0.0], [-1.45, 0.6, 6.0]))


def load_scene(path):
    with open(path) as fh:
        return SceneConfig.from_dict(json.load(fh), os.path.dirname(os.path.abspath(path)))


def scene_cloud(cfg):
    """The scene object with its body origin moved to its centroid, so the
    centroid follows the ballistic arc while the body spins about it."""
    obj = cfg.object
    if "path" in obj:
        cloud = load_cloud(obj["path"])
    else:
        cloud = procedural_cloud(obj.get("shape", "sphere"), obj.get("n", 96), obj.get("seed", 0),
                                 obj.get("diameter", 1.0))
    return cloud.replace(positions=cloud.positions - centroid(cloud))


def generate_trajectory(cfg):
    g = cfg.physics.gravity_vector
    poses = []
    for n in range(cfg.num_frames):
        tau = n * cfg.dt
        t = cfg.v0 * tau + 0.5 * g * tau * tau
        q = quat_multiply(axis_angle_to_quat(cfg.omega * tau), np.array([1.0, 0.0, 0.0, 0.0]))
        poses.append(Pose(q, t))
    return poses


@dataclass
class GroundTruthSequence:
    poses: list
    images: list
    masks: list
    flow: np.ndarray       # (N, 2) noisy centroid pixel displacement from the previous frame
    centroids: np.ndarray  # (N, 3) true world centroids
    cloud: GaussianCloud
    camera: Camera
    config: SceneConfig = None

    def __len__(self):
        return len(self.poses)


def synthesize_frames(cfg, trajectory, cloud):
    if len(cloud) == 0:
        raise InvalidInputError("cannot render an empty cloud")
    cam = cfg.camera
    images, masks, cents, pix = [], [], [], []
    for n, pose in enumerate(trajectory):
        posed = apply_pose(pose, cloud)
        img = splat_render(posed, cam)
        mask = img.silhouette()
        if not mask.any():
            raise OutOfViewError(f"object leaves the view at frame {n}", frame=n)
        c = centroid(posed)
        images.append(img)
        masks.append(mask)
        cents.append(c)
        pix.append(project(c, cam)[0])
    pix = np.array(pix)
    flow = np.zeros((len(trajectory), 2))
    for n in range(1, len(trajectory)):
        # counter-based stream per frame keeps noise independent of evaluation order
        rng = np.random.default_rng([int(cfg.seed), n])
        flow[n] = pix[n] - pix[n - 1] + cfg.flow_noise_std * rng.normal(size=2)
    return GroundTruthSequence(list(trajectory), images, masks, flow, np.array(cents), cloud, cam, cfg)


def simulate(cfg):
    cloud = scene_cloud(cfg)
    return synthesize_frames(cfg, generate_trajectory(cfg), cloud)


def write_flow_csv(path, flow):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "du", "dv"])
        for n, (du, dv) in enumerate(flow):
            w.writerow([n, repr(float(du)), repr(float(dv))])


def read_flow_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return np.array([[float(r["du"]), float(r["dv"])] for r in rows]).reshape(-1, 2)


def write_sequence(seq, out_dir):
    """Write frames/, masks/, gt_poses.csv, flow_obs.csv, scene.json, cloud.json, frames.npz."""
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    os.makedirs(os.path.join(out_dir, "masks"), exist_ok=True)
    for n, (img, mask) in enumerate(zip(seq.images, seq.masks)):
        save_rgba(os.path.join(out_dir, "frames", f"{n:04d}.png"), img)
        save_mask(os.path.join(out_dir, "masks", f"{n:04d}.png"), mask)
    write_pose_csv(os.path.join(out_dir, "gt_poses.csv"), seq.poses)
    write_flow_csv(os.path.join(out_dir, "flow_obs.csv"), seq.flow)
    save_cloud(seq.cloud, os.path.join(out_dir, "cloud.json"))
    scene = seq.config.to_dict()
    scene["object"] = {"path": "cloud.json"}
    with open(os.path.join(out_dir, "scene.json"), "w") as fh:
        json.dump(scene, fh, indent=2)
    # lossless float copies; the PNGs are 8-bit and for inspection
    np.savez_compressed(os.path.join(out_dir, "frames.npz"),
                        rgb=np.stack([im.rgb for im in seq.images]),
                        alpha=np.stack([im.alpha for im in seq.images]))
