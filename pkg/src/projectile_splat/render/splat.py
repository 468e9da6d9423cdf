"""Surrogate isotropic splat renderer and pose gradients of the photometric loss."""
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError, NumericalFailureError
from ..se3 import normalized_quat_jacobian, quat_to_matrix, rotated_point_jacobian
from ._raster import composite, composite_backward
from .camera import MIN_DEPTH
from .loss import photometric_loss


@dataclass(frozen=True)
class RenderedImage:
    rgb: np.ndarray
    alpha: np.ndarray

    @property
    def width(self):
        return self.rgb.shape[1]

    @property
    def height(self):
        return self.rgb.shape[0]

    def silhouette(self, threshold=0.5):
        return self.alpha > threshold

    @classmethod
    def blank(cls, width, height):
        return cls(np.zeros((height, width, 3)), np.zeros((height, width)))


@dataclass
class _Screen:
    order: np.ndarray   # original kernel indices, near to far
    cam_pts: np.ndarray  # camera-frame positions, sorted
    u: np.ndarray
    v: np.ndarray
    r: np.ndarray
    opa: np.ndarray
    col: np.ndarray


def _screen_space(positions, radii, colors, opacities, cam):
    pc = cam.to_camera(positions)
    depth = pc[:, 2]
    visible = np.flatnonzero(depth > MIN_DEPTH)
    # stable sort: equal depths keep kernel-index order
    order = visible[np.argsort(depth[visible], kind="stable")]
    pts = pc[order]
    z = pts[:, 2]
    f = cam.focal
    u = f * pts[:, 0] / z + cam.principal_point[0]
    v = f * pts[:, 1] / z + cam.principal_point[1]
    r = f * radii[order] / z
    return _Screen(order, pts, u, v, r, opacities[order], colors[order])


def _check_iso(cloud):
    if not cloud.is_isotropic:
        raise InvalidInputError("the splat renderer expects an isotropic cloud")


def _render_arrays(positions, radii, colors, opacities, cam):
    scr = _screen_space(positions, radii, colors, opacities, cam)
    rgb, trans = composite(scr.u, scr.v, scr.r, scr.opa, scr.col, cam.width, cam.height)
    return scr, rgb, trans


def splat_render(cloud, cam):
    """Composite depth-sorted isotropic footprints front to back on black."""
    _check_iso(cloud)
    if len(cloud) == 0:
        return RenderedImage.blank(cam.width, cam.height)
    _, rgb, trans = _render_arrays(cloud.positions, cloud.radii, cloud.colors, cloud.opacities, cam)
    return RenderedImage(rgb, 1.0 - trans)


def _check_params(params, size):
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    if params.shape != (size,) or not np.all(np.isfinite(params)):
        raise InvalidInputError(f"expected {size} finite parameters")
    if np.linalg.norm(params[:4]) == 0:
        raise InvalidInputError("quaternion part is zero")
    return params


def _target_rgb(target):
    return target.rgb if hasattr(target, "rgb") else np.asarray(target, dtype=np.float64)


def render_loss_and_grad(positions, radii, colors, opacities, cam, target, lambda_dssim):
    """Photometric loss of a render plus its gradient w.r.t. world positions and radii.

    Returns (loss, image, d_positions (N, 3), d_radii (N,)).
    """
    target_rgb = _target_rgb(target)
    if target_rgb.shape != (cam.height, cam.width, 3):
        raise InvalidInputError("target size does not match the camera resolution")
    scr, rgb, trans = _render_arrays(positions, radii, colors, opacities, cam)
    loss, g_rgb = photometric_loss(rgb, target_rgb, lambda_dssim, with_grad=True)
    gu, gv, gr = composite_backward(scr.u, scr.v, scr.r, scr.opa, scr.col, trans, g_rgb)
    f = cam.focal
    x, y, z = scr.cam_pts[:, 0], scr.cam_pts[:, 1], scr.cam_pts[:, 2]
    rad = radii[scr.order]
    g_cam = np.empty((len(scr.order), 3))
    g_cam[:, 0] = gu * f / z
    g_cam[:, 1] = gv * f / z
    g_cam[:, 2] = -(gu * f * x + gv * f * y + gr * f * rad) / (z * z)
    d_pos = np.zeros_like(positions)
    d_rad = np.zeros_like(radii)
    # camera point = R_cam p + t_cam, so dL/dp = R_cam^T dL/dc
    d_pos[scr.order] = g_cam @ cam.rotation
    d_rad[scr.order] = gr * f / z
    image = RenderedImage(rgb, 1.0 - trans)
    return loss, image, d_pos, d_rad


def pose_loss_and_grad(params, cloud, cam, target, lambda_dssim):
    """Loss and gradient w.r.t. the raw 7-vector (qw, qx, qy, qz, tx, ty, tz).

    The quaternion is normalised inside, so the gradient has no radial
    component along q.
    """
    _check_iso(cloud)
    params = _check_params(params, 7)
    q_raw, t = params[:4], params[4:7]
    q = q_raw / np.linalg.norm(q_raw)
    rot = quat_to_matrix(q)
    pos = cloud.positions @ rot.T + t
    loss, image, d_pos, _ = render_loss_and_grad(
        pos, cloud.radii, cloud.colors, cloud.opacities, cam, target, lambda_dssim)
    grad = np.empty(7)
    grad[4:] = d_pos.sum(axis=0)
    jac = rotated_point_jacobian(q, cloud.positions)
    d_q = np.einsum("ni,nij->j", d_pos, jac)
    grad[:4] = normalized_quat_jacobian(q_raw) @ d_q
    if not np.all(np.isfinite(grad)) or not np.isfinite(loss):
        raise NumericalFailureError("non-finite photometric gradient")
    return loss, image, grad


def pose_photometric_gradient(pose, cloud, cam, target, lambda_dssim=0.2):
    """Gradient of the photometric loss w.r.t. the 7 pose parameters."""
    params = pose.params() if hasattr(pose, "params") else pose
    return pose_loss_and_grad(params, cloud, cam, target, lambda_dssim)[2]


def similarity_loss_and_grad(params, cloud, cam, target, lambda_dssim):
    """Loss and gradient w.r.t. (qw, qx, qy, qz, tx, ty, tz, s) of a scaled rigid transform."""
    _check_iso(cloud)
    params = _check_params(params, 8)
    q_raw, t, s = params[:4], params[4:7], params[7]
    q = q_raw / np.linalg.norm(q_raw)
    rot = quat_to_matrix(q)
    rotated = cloud.positions @ rot.T
    loss, image, d_pos, d_rad = render_loss_and_grad(
        s * rotated + t, s * cloud.radii, cloud.colors, cloud.opacities, cam, target, lambda_dssim)
    grad = np.empty(8)
    grad[4:7] = d_pos.sum(axis=0)
    grad[7] = np.sum(d_pos * rotated) + np.sum(d_rad * cloud.radii)
    jac = rotated_point_jacobian(q, cloud.positions)
    grad[:4] = normalized_quat_jacobian(q_raw) @ (s * np.einsum("ni,nij->j", d_pos, jac))
    if not np.all(np.isfinite(grad)) or not np.isfinite(loss):
        raise NumericalFailureError("non-finite registration gradient")
    return loss, image, grad
