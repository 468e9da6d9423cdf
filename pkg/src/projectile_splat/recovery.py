"""Trajectory recovery: registration, per-frame pose fitting under the
displacement-adaptive schedule, and Kalman re-anchoring of translations."""
import csv
import json
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import dsa as dsa_mod
from .dsa import DSAConfig, DisplacementReference
from .errors import (
    EmptySilhouetteError, InvalidInputError, NumericalFailureError, OptimizationFailureError,
)
from .gaussians import PruneConfig, centroid, isotropize, load_cloud, prune, save_cloud
from .imageio import load_rgba
from .kalman import (
    AxisFilter, NoiseConfig, ObservationPair, backproject_flow, flow_axis_variances, fuse_frame,
)
from .optim import Adam
from .physics import (
    PhysicsConfig, acc_consistency_residual, acc_consistency_residual_jacobian,
    finite_diff_acceleration,
)
from .render import Camera, LossWeights, RenderedImage, pose_loss_and_grad, similarity_loss_and_grad
from .render.splat import splat_render
from .se3 import (
    Pose, RegistrationTransform, normalize_quat, normalized_quat_jacobian, quat_to_matrix,
    rotated_point_jacobian, scale_cloud, write_pose_csv,
)

PRUNE_MODES = ("post", "none")
CONTROL_MODES = ("latest", "gravity")


@dataclass(frozen=True)
class RecoveryConfig:
    loss_weights: LossWeights = field(default_factory=LossWeights)
    dsa: DSAConfig = field(default_factory=DSAConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)
    registration_lr: float = 5e-5
    registration_iters: int = 10000
    kalman_enabled: bool = True
    literal_lacc: bool = False
    dsa_enabled: bool = True
    prune_mode: str = "post"
    prune: PruneConfig = field(default_factory=PruneConfig)
    # when set, flow variance per axis follows from this pixel noise and depth
    flow_noise_px: float | None = None
    kalman_velocity_var: float = 100.0
    control: str = "gravity"

    def __post_init__(self):
        if self.prune_mode not in PRUNE_MODES:
            raise InvalidInputError(f"prune_mode must be one of {PRUNE_MODES}")
        if self.control not in CONTROL_MODES:
            raise InvalidInputError(f"control must be one of {CONTROL_MODES}")
        if not self.registration_lr > 0:
            raise InvalidInputError("registration_lr must be > 0")
        if int(self.registration_iters) != self.registration_iters or self.registration_iters < 0:
            raise InvalidInputError("registration_iters must be a nonnegative integer")

    def to_dict(self):
        w, d, q = self.loss_weights, self.dsa, self.noise
        return {
            "loss_weights": {"lambda_dssim": w.lambda_dssim, "lambda_gs": w.lambda_gs,
                             "lambda_acc": w.lambda_acc, "lambda_smooth": w.lambda_smooth},
            "dsa": {"lr_base": d.lr_base, "iter_base": d.iter_base,
                    "decay_floor_ratio": d.decay_floor_ratio,
                    "iter_cap_multiplier": d.iter_cap_multiplier},
            "noise": {"sigma_ds_sq": q.sigma_ds_sq, "sigma_v_sq": q.sigma_v_sq,
                      "sigma_flow_sq": q.sigma_flow_sq, "sigma_learn_sq": q.sigma_learn_sq},
            "physics": self.physics.to_dict(),
            "registration_lr": self.registration_lr,
            "registration_iters": self.registration_iters,
            "kalman_enabled": self.kalman_enabled,
            "literal_lacc": self.literal_lacc,
            "dsa_enabled": self.dsa_enabled,
            "prune_mode": self.prune_mode,
            "prune": {"tau_L": self.prune.tau_L, "tau_D": self.prune.tau_D},
            "flow_noise_px": self.flow_noise_px,
            "kalman_velocity_var": self.kalman_velocity_var,
            "control": self.control,
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        kw = {}
        if "loss_weights" in d:
            kw["loss_weights"] = LossWeights(**d.pop("loss_weights"))
        if "dsa" in d:
            kw["dsa"] = DSAConfig(**d.pop("dsa"))
        if "noise" in d:
            kw["noise"] = NoiseConfig(**d.pop("noise"))
        if "physics" in d:
            kw["physics"] = PhysicsConfig.from_dict(d.pop("physics"))
        if "prune" in d:
            kw["prune"] = PruneConfig(**d.pop("prune"))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InvalidInputError(f"unknown recovery config keys: {sorted(unknown)}")
        kw.update(d)
        return cls(**kw)

    def ablated(self, mode):
        """Config with one component switched off."""
        if mode == "full":
            return self
        if mode == "no-lacc":
            return replace(self, loss_weights=self.loss_weights.without("acc"))
        if mode == "no-smooth":
            return replace(self, loss_weights=self.loss_weights.without("smooth"))
        if mode == "no-dsa":
            return replace(self, dsa_enabled=False)
        if mode == "no-kalman":
            return replace(self, kalman_enabled=False)
        raise InvalidInputError(f"unknown ablation mode {mode!r}")


def load_recovery_config(path):
    with open(path) as fh:
        return RecoveryConfig.from_dict(json.load(fh))


def smooth_loss(learned_delta, flow_delta):
    """Squared distance between the learned and flow-derived displacements."""
    d = np.asarray(learned_delta, dtype=np.float64) - np.asarray(flow_delta, dtype=np.float64)
    return float(d @ d)


def prepare_cloud(cloud, cfg):
    """Optional density control, isotropization, then centre on the centroid."""
    if cfg.prune_mode == "post" and len(cloud) >= 2:
        cloud = prune(cloud, cfg.prune)
    cloud = isotropize(cloud)
    return cloud.replace(positions=cloud.positions - centroid(cloud))


def _target_rgb(frame):
    return frame.rgb if hasattr(frame, "rgb") else np.asarray(frame, dtype=np.float64)


def _silhouette_stats(mask):
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise EmptySilhouetteError("target silhouette is empty")
    return np.array([xs.mean(), ys.mean()]), xs.size


def registration_init(cloud, first_frame, cam):
    """Identity rotation; translation from the silhouette centre placed at the
    depth of the world origin; scale from the silhouette-area ratio."""
    alpha = first_frame.alpha if hasattr(first_frame, "alpha") else None
    mask = alpha > 0.5 if alpha is not None else np.any(_target_rgb(first_frame) > 0.02, axis=-1)
    pix, area = _silhouette_stats(mask)
    depth = cam.to_camera(np.zeros(3))[2]
    if depth <= 0:
        raise InvalidInputError("world origin is behind the camera")
    pc = np.array([(pix[0] - cam.principal_point[0]) * depth / cam.focal,
                   (pix[1] - cam.principal_point[1]) * depth / cam.focal, depth])
    t0 = cam.rotation.T @ (pc - cam.extrinsic.translation)
    probe = splat_render(cloud.replace(positions=cloud.positions + t0), cam)
    probe_area = probe.silhouette().sum()
    s0 = float(np.sqrt(area / probe_area)) if probe_area > 0 else 1.0
    return RegistrationTransform([1.0, 0.0, 0.0, 0.0], t0, s0)


def register(cloud, first_frame, cam, cfg, init=None):
    """Fit rotation, translation and uniform scale of ``cloud`` to the first frame."""
    if len(cloud) == 0:
        raise InvalidInputError("cannot register an empty cloud")
    init = registration_init(cloud, first_frame, cam) if init is None else init
    target = _target_rgb(first_frame)
    lam = cfg.loss_weights.lambda_dssim
    params = np.concatenate([init.rotation, init.translation, [init.scale]])
    adam = Adam(8)
    best_loss, best = np.inf, params.copy()
    for i in range(cfg.registration_iters + 1):
        try:
            loss, _, grad = similarity_loss_and_grad(params, cloud, cam, target, lam)
        except NumericalFailureError as exc:
            raise OptimizationFailureError(f"registration diverged at iteration {i}", iteration=i) from exc
        if loss < best_loss:
            best_loss, best = loss, params.copy()
        if i == cfg.registration_iters:
            break
        params = adam.step(params, grad, cfg.registration_lr)
        params[:4] = normalize_quat(params[:4])
        params[7] = max(params[7], 1e-6)
    return RegistrationTransform(normalize_quat(best[:4]), best[4:7], best[7])


class FrameObjective:
    """Weighted photometric, acceleration-consistency and flow-smoothness loss
    for one frame's 7 pose parameters.

    ``history`` holds the reported centroids of earlier frames, oldest first.
    The two physics terms are made dimensionless by the object diameter D:
    acceleration residuals by (dt^2 / D)^2 and displacement residuals by 1 / D^2.
    """

    def __init__(self, cloud, cam, target, history, flow_delta, weights, physics,
                 diameter, literal=False):
        self.cloud = cloud
        self.cam = cam
        self.target = _target_rgb(target)
        self.history = np.asarray(history, dtype=np.float64).reshape(-1, 3)
        self.flow_delta = None if flow_delta is None else np.asarray(flow_delta, dtype=np.float64)
        self.w = weights
        self.physics = physics
        self.diameter = max(float(diameter), 1e-12)
        self.literal = literal
        self.body_centroid = centroid(cloud)
        self.a_prev = self._previous_acceleration()

    def _previous_acceleration(self):
        h, dt = self.history, self.physics.frame_dt
        if len(h) >= 3:
            return finite_diff_acceleration(h[-3], h[-2], h[-1], dt)
        if len(h) == 2:
            return self.physics.gravity_vector
        return None

    def centroid_of(self, params):
        q = normalize_quat(params[:4])
        return quat_to_matrix(q) @ self.body_centroid + params[4:7]

    def __call__(self, params):
        params = np.asarray(params, dtype=np.float64)
        w = self.w
        gs, image, grad = pose_loss_and_grad(params, self.cloud, self.cam, self.target, w.lambda_dssim)
        grad = w.lambda_gs * grad
        c = self.centroid_of(params)
        g_c = np.zeros(3)
        acc = 0.0
        dt = self.physics.frame_dt
        if self.a_prev is not None and w.lambda_acc > 0:
            a_cur = finite_diff_acceleration(self.history[-2], self.history[-1], c, dt)
            g_dir = self.physics.gravity_dir
            r = acc_consistency_residual(self.a_prev, a_cur, g_dir, self.literal)
            scale = (dt * dt / self.diameter) ** 2
            acc = float(r @ r) * scale
            jac = acc_consistency_residual_jacobian(g_dir, self.literal)
            g_c += w.lambda_acc * 2.0 * scale * (jac.T @ r) / (dt * dt)
        smooth = 0.0
        if self.flow_delta is not None and len(self.history) >= 1 and w.lambda_smooth > 0:
            d = c - self.history[-1]
            smooth = smooth_loss(d, self.flow_delta) / self.diameter ** 2
            g_c += w.lambda_smooth * 2.0 * (d - self.flow_delta) / self.diameter ** 2
        grad[4:7] += g_c
        if np.any(self.body_centroid != 0):
            q_raw = params[:4]
            jq = rotated_point_jacobian(normalize_quat(q_raw), self.body_centroid[None])[0]
            grad[:4] += normalized_quat_jacobian(q_raw) @ (jq.T @ g_c)
        total = w.lambda_gs * gs + w.lambda_acc * acc + w.lambda_smooth * smooth
        comps = {"gs": gs, "acc": acc, "smooth": smooth}
        return total, comps, grad, image


def recover_frame(objective, init_pose, lr_init, iterations, dsa_cfg, frame=None):
    """Adam descent from ``init_pose``; returns (best pose, its loss parts, total)."""
    params = init_pose.params().astype(np.float64)
    params[:4] = normalize_quat(params[:4])
    adam = Adam(7)
    best = (np.inf, params.copy(), None)
    for i in range(iterations + 1):
        try:
            total, comps, grad, _ = objective(params)
        except NumericalFailureError as exc:
            raise OptimizationFailureError(f"non-finite loss at frame {frame}, iteration {i}",
                                           iteration=i, frame=frame) from exc
        if not np.isfinite(total) or not np.all(np.isfinite(grad)):
            raise OptimizationFailureError(f"non-finite loss at frame {frame}, iteration {i}",
                                           iteration=i, frame=frame)
        if total < best[0]:
            best = (total, params.copy(), comps)
        if i == iterations:
            break
        lr = dsa_mod.lr_at_iteration(lr_init, i, iterations, dsa_cfg)
        params = adam.step(params, grad, lr)
        params[:4] = normalize_quat(params[:4])
    total, p, comps = best
    return Pose(p[:4], p[4:7]), comps, total


@dataclass
class TrajectoryResult:
    poses: list
    centroids: np.ndarray
    losses: list
    kalman_trace: list
    registration: RegistrationTransform
    cloud: object
    config: RecoveryConfig

    def __len__(self):
        return len(self.poses)


def _control_input(n, centroids, physics, mode):
    g = physics.gravity_vector
    fallback = np.zeros(3) if g is None else g
    if mode == "gravity" or n < 3:
        return fallback
    c = centroids
    return finite_diff_acceleration(c[n - 3], c[n - 2], c[n - 1], physics.frame_dt)


def recover_sequence(frames, flow, cloud, cam, cfg, progress=None):
    """Recover per-frame poses of ``cloud`` from target frames and flow readings.

    ``frames`` are RenderedImage targets (or (H, W, 3) arrays); ``flow[n]``
    is the observed centroid pixel displacement from frame n-1 to n.
    """
    n_frames = len(frames)
    if n_frames < 3:
        raise InvalidInputError("recovery needs at least 3 frames")
    flow = np.asarray(flow, dtype=np.float64).reshape(-1, 2)
    if flow.shape[0] != n_frames:
        raise InvalidInputError("one flow reading per frame is required")
    physics = cfg.physics
    dt = physics.frame_dt
    base = prepare_cloud(cloud, cfg)
    reg = register(base, frames[0], cam, cfg)
    canon = scale_cloud(base, reg.scale)
    diameter = canon.diameter() or 1.0
    body_c = centroid(canon)
    pose0 = reg.pose()
    poses = [pose0]
    cents = [quat_to_matrix(pose0.rotation) @ body_c + pose0.translation]
    g0 = similarity_loss_and_grad(
        np.concatenate([reg.rotation, reg.translation, [reg.scale]]), base, cam,
        _target_rgb(frames[0]), cfg.loss_weights.lambda_dssim)[0]
    losses = [{"frame": 0, "iterations": cfg.registration_iters, "lr_init": cfg.registration_lr,
               "total": cfg.loss_weights.lambda_gs * g0, "gs": g0, "acc": 0.0, "smooth": 0.0}]
    filters = [AxisFilter(0.0, cfg.kalman_velocity_var) for _ in range(3)]
    trace = []
    ref = DisplacementReference()
    prev_disp = 0.0
    for n in range(1, n_frames):
        prev = poses[-1]
        depth = float(cam.to_camera(cents[-1])[2])
        if depth <= 0:
            raise OptimizationFailureError(f"estimate moved behind the camera at frame {n}", frame=n)
        flow_delta = backproject_flow(flow[n], depth, cam)
        a_ctrl = _control_input(n, np.array(cents), physics, cfg.control)
        if not cfg.kalman_enabled:
            pred = np.zeros(3)
        elif n == 1:
            # the filter has no velocity yet; the flow reading is the only motion cue
            pred = flow_delta
        else:
            pred = np.array([filters[k].predicted_displacement(a_ctrl[k], dt) for k in range(3)])
        init = Pose(prev.rotation, prev.translation + pred)
        if cfg.dsa_enabled:
            lr0, iters = ref.schedule(prev_disp, cfg.dsa)
        else:
            lr0, iters = cfg.dsa.lr_base, cfg.dsa.iter_base
        objective = FrameObjective(canon, cam, frames[n], np.array(cents), flow_delta,
                                   cfg.loss_weights, physics, diameter, cfg.literal_lacc)
        pose, comps, total = recover_frame(objective, init, lr0, iters, cfg.dsa, frame=n)
        learned = pose.translation - prev.translation
        if cfg.kalman_enabled:
            if cfg.flow_noise_px is not None:
                var = flow_axis_variances(cam, depth, cfg.flow_noise_px, diameter ** 2)
                noises = [cfg.noise.with_flow(v) for v in var]
            else:
                noises = cfg.noise
            obs = [ObservationPair(flow_delta[k], learned[k]) for k in range(3)]
            fused, tr = fuse_frame(filters, obs, a_ctrl, dt, noises)
            for k, row in enumerate(tr):
                trace.append({"frame": n, "axis": "xyz"[k], **row})
            pose = Pose(pose.rotation, prev.translation + fused)
        poses.append(pose)
        cents.append(quat_to_matrix(pose.rotation) @ body_c + pose.translation)
        disp = float(np.linalg.norm(pose.translation - prev.translation))
        ref.update(disp)
        prev_disp = disp
        losses.append({"frame": n, "iterations": iters, "lr_init": lr0, "total": total, **comps})
        if progress is not None:
            progress(n, n_frames, losses[-1])
    return TrajectoryResult(poses, np.array(cents), losses, trace, reg, canon, cfg)


def _write_rows(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


LOSS_COLUMNS = ["frame", "iterations", "lr_init", "total", "gs", "acc", "smooth"]
TRACE_COLUMNS = ["frame", "axis", "prior_ds", "prior_v", "z_flow", "z_learn", "k_flow",
                 "k_learn", "post_ds", "post_v", "post_var_ds"]


def write_result(result, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    write_pose_csv(os.path.join(out_dir, "recovered_poses.csv"), result.poses)
    losses = [{k: (float(v) if k not in ("frame", "iterations") else int(v)) for k, v in r.items()}
              for r in result.losses]
    _write_rows(os.path.join(out_dir, "losses.csv"), losses, LOSS_COLUMNS)
    trace = [{k: (float(v) if k not in ("frame", "axis") else v) for k, v in r.items()}
             for r in result.kalman_trace]
    _write_rows(os.path.join(out_dir, "kalman_trace.csv"), trace, TRACE_COLUMNS)
    rows = [{"frame": n, "cx": float(c[0]), "cy": float(c[1]), "cz": float(c[2])}
            for n, c in enumerate(result.centroids)]
    _write_rows(os.path.join(out_dir, "centroids.csv"), rows, ["frame", "cx", "cy", "cz"])
    reg = result.registration
    with open(os.path.join(out_dir, "registration.json"), "w") as fh:
        json.dump({"quaternion": reg.rotation.tolist(), "translation": reg.translation.tolist(),
                   "scale": reg.scale}, fh, indent=2)
    save_cloud(result.cloud, os.path.join(out_dir, "cloud.json"))
    with open(os.path.join(out_dir, "recovery_config.json"), "w") as fh:
        json.dump(result.config.to_dict(), fh, indent=2)


@dataclass
class SceneInputs:
    frames: list
    flow: np.ndarray
    cloud: object
    camera: Camera
    physics: PhysicsConfig


def load_scene_inputs(scene_dir):
    """Read a simulator output directory: targets, flow readings, cloud, camera, physics."""
    from .simulator import read_flow_csv
    with open(os.path.join(scene_dir, "scene.json")) as fh:
        scene = json.load(fh)
    cam = Camera.from_dict(scene["camera"])
    physics = PhysicsConfig.from_dict(scene.get("physics", {}))
    npz = os.path.join(scene_dir, "frames.npz")
    if os.path.exists(npz):
        data = np.load(npz)
        frames = [RenderedImage(rgb, a) for rgb, a in zip(data["rgb"], data["alpha"])]
    else:
        names = sorted(os.listdir(os.path.join(scene_dir, "frames")))
        frames = [load_rgba(os.path.join(scene_dir, "frames", f)) for f in names]
    flow = read_flow_csv(os.path.join(scene_dir, "flow_obs.csv"))
    cloud = load_cloud(os.path.join(scene_dir, "cloud.json"))
    return SceneInputs(frames, flow, cloud, cam, physics)
