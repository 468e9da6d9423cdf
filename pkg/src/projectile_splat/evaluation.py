"""Motion-recovery metrics: bounding-box IoU and normalised trajectory errors."""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySilhouetteError, InvalidInputError
from .gaussians import centroid, load_cloud
from .imageio import load_mask
from .render import Camera, splat_render
from .se3 import apply_pose, read_pose_csv


@dataclass(frozen=True)
class BBox:
    """Inclusive pixel box; coordinates are (x, y) = (column, row)."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64).reshape(2)
        hi = np.asarray(self.max, dtype=np.float64).reshape(2)
        if np.any(hi < lo):
            raise InvalidInputError("box max must be >= min")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def center(self):
        return 0.5 * (self.min + self.max)

    @property
    def area(self):
        return float(np.prod(self.max - self.min + 1))


def silhouette_bbox(mask):
    m = np.asarray(mask, dtype=bool)
    rows = np.flatnonzero(m.any(axis=1))
    if rows.size == 0:
        raise EmptySilhouetteError("mask has no foreground pixels")
    cols = np.flatnonzero(m.any(axis=0))
    return BBox((cols[0], rows[0]), (cols[-1], rows[-1]))


def iou(a, b):
    lo = np.maximum(a.min, b.min)
    hi = np.minimum(a.max, b.max)
    wh = np.clip(hi - lo + 1, 0, None)
    inter = float(wh[0] * wh[1])
    return inter / (a.area + b.area - inter)


def trajectory_errors(recovered, truth, normalizer):
    """(ATE, RMSE) of per-frame distances divided by ``normalizer``."""
    rec = np.asarray(recovered, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if rec.shape != tru.shape:
        raise InvalidInputError(f"series shapes differ: {rec.shape} vs {tru.shape}")
    if not normalizer > 0:
        raise InvalidInputError("normalizer must be > 0")
    e = per_frame_errors(rec, tru, normalizer)
    return float(e.mean()), float(np.sqrt(np.mean(e * e)))


def per_frame_errors(recovered, truth, normalizer):
    rec = np.asarray(recovered, dtype=np.float64)
    tru = np.asarray(truth, dtype=np.float64)
    if rec.ndim == 1:
        return np.abs(rec - tru) / normalizer
    return np.linalg.norm(rec - tru, axis=-1) / normalizer


@dataclass
class MetricsReport:
    mean_iou: float
    ate: float
    rmse: float
    ate_3d: float
    rmse_3d: float
    per_frame: list = field(default_factory=list)

    def to_dict(self):
        return {"mean_iou": self.mean_iou, "ate": self.ate, "rmse": self.rmse,
                "ate_3d": self.ate_3d, "rmse_3d": self.rmse_3d, "per_frame": self.per_frame}

    def write(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)
        with open(os.path.join(out_dir, "metrics_per_frame.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["frame", "iou", "center_error", "centroid_error_3d"])
            for row in self.per_frame:
                w.writerow([row["frame"], repr(row["iou"]), repr(row["center_error"]),
                            repr(row["centroid_error_3d"])])


def compare(rec_masks, gt_masks, rec_centroids, gt_centroids, image_size, diameter):
    """Metrics from silhouettes (2-D) and centroids (3-D).

    A frame whose recovered silhouette is empty scores IoU 0 and a
    centre error of one full image diagonal.
    """
    if len(rec_masks) != len(gt_masks) or len(rec_centroids) != len(gt_centroids):
        raise InvalidInputError("recovered and true sequences differ in length")
    w, h = image_size
    diag = float(np.hypot(w, h))
    ious, errs = [], []
    for rm, gm in zip(rec_masks, gt_masks):
        gb = silhouette_bbox(gm)
        try:
            rb = silhouette_bbox(rm)
        except EmptySilhouetteError:
            ious.append(0.0)
            errs.append(1.0)
            continue
        ious.append(iou(rb, gb))
        errs.append(float(np.linalg.norm(rb.center - gb.center)) / diag)
    errs = np.array(errs)
    e3 = per_frame_errors(rec_centroids, gt_centroids, diameter)
    per_frame = [{"frame": n, "iou": float(ious[n]), "center_error": float(errs[n]),
                  "centroid_error_3d": float(e3[n])} for n in range(len(ious))]
    return MetricsReport(float(np.mean(ious)), float(errs.mean()), float(np.sqrt(np.mean(errs ** 2))),
                         float(e3.mean()), float(np.sqrt(np.mean(e3 ** 2))), per_frame)


def render_silhouettes(cloud, poses, cam):
    return [splat_render(apply_pose(p, cloud), cam).silhouette() for p in poses]


def evaluate_dirs(result_dir, gt_dir):
    """Metrics for a recovery output directory against a simulator directory."""
    with open(os.path.join(gt_dir, "scene.json")) as fh:
        cam = Camera.from_dict(json.load(fh)["camera"])
    gt_cloud = load_cloud(os.path.join(gt_dir, "cloud.json"))
    gt_poses = read_pose_csv(os.path.join(gt_dir, "gt_poses.csv"))
    names = sorted(os.listdir(os.path.join(gt_dir, "masks")))
    gt_masks = [load_mask(os.path.join(gt_dir, "masks", f)) for f in names]
    rec_cloud = load_cloud(os.path.join(result_dir, "cloud.json"))
    rec_poses = read_pose_csv(os.path.join(result_dir, "recovered_poses.csv"))
    if len(rec_poses) != len(gt_poses):
        raise InvalidInputError("recovered and true pose counts differ")
    rec_masks = render_silhouettes(rec_cloud, rec_poses, cam)
    gt_c = np.array([centroid(apply_pose(p, gt_cloud)) for p in gt_poses])
    rec_c = np.array([centroid(apply_pose(p, rec_cloud)) for p in rec_poses])
    return compare(rec_masks, gt_masks, rec_c, gt_c, cam.resolution, gt_cloud.diameter() or 1.0)


def evaluate_result(result, seq):
    """In-memory variant of ``evaluate_dirs`` for a TrajectoryResult and GroundTruthSequence."""
    rec_masks = render_silhouettes(result.cloud, result.poses, seq.camera)
    return compare(rec_masks, seq.masks, result.centroids, seq.centroids,
                   seq.camera.resolution, seq.cloud.diameter() or 1.0)
