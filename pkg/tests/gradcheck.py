"""Finite-difference oracles for the pose gradient.

The photometric loss is piecewise smooth: the L1 term has kinks where a
rendered pixel crosses its target value and compositing changes when two
kernels swap depth order. ``frozen_piece_loss`` evaluates the loss on the
smooth piece active at a base point (depth order and L1 sign pattern held
fixed), built only from forward code, so central differences of it are a
valid oracle for the analytic gradient there.
"""
import numpy as np

from projectile_splat.gaussians import GaussianCloud
from projectile_splat.render import Camera, pose_loss_and_grad, splat_render, ssim
from projectile_splat.render._raster import composite
from projectile_splat.render.splat import _screen_space
from projectile_splat.se3 import Pose, apply_pose, axis_angle_to_quat, quat_to_matrix

H = 1e-4
LAMBDA = 0.2
CAM = Camera(150.0, (64.0, 64.0), (128, 128), Pose([0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 5.0]))


def posed_positions(params, cloud):
    q = params[:4] / np.linalg.norm(params[:4])
    return cloud.positions @ quat_to_matrix(q).T + params[4:7]


def base_piece(params, cloud, target, cam=CAM):
    pos = posed_positions(params, cloud)
    scr = _screen_space(pos, cloud.radii, cloud.colors, cloud.opacities, cam)
    img = splat_render(apply_pose(Pose.from_params(params), cloud), cam)
    return scr.order, np.sign(img.rgb - target.rgb)


def frozen_piece_loss(params, cloud, target, order, sign, lam=LAMBDA, cam=CAM):
    pc = cam.to_camera(posed_positions(params, cloud))[order]
    f = cam.focal
    u = f * pc[:, 0] / pc[:, 2] + cam.principal_point[0]
    v = f * pc[:, 1] / pc[:, 2] + cam.principal_point[1]
    r = f * cloud.radii[order] / pc[:, 2]
    rgb, _ = composite(u, v, r, cloud.opacities[order], cloud.colors[order], cam.width, cam.height)
    l1 = np.sum(sign * (rgb - target.rgb)) / rgb.size
    return (1 - lam) * l1 + lam * (1 - ssim(rgb, target.rgb)) / 2


def random_case(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 97))
    pos = rng.normal(size=(n, 3))
    pos = 0.5 * pos / np.linalg.norm(pos, axis=1, keepdims=True)
    cloud = GaussianCloud(pos, rng.uniform(0, 1, (n, 3)), rng.uniform(0.3, 0.9, n),
                          radii=rng.uniform(0.04, 0.1, n))
    # independent target object and pose
    m = 60
    p2 = rng.uniform(-0.5, 0.5, (m, 3))
    other = GaussianCloud(p2, rng.uniform(0, 1, (m, 3)), rng.uniform(0.3, 0.9, m),
                          radii=rng.uniform(0.04, 0.1, m))
    target = splat_render(other, CAM)
    params = np.concatenate([axis_angle_to_quat(rng.normal(0, 0.3, 3)), rng.normal(0, 0.1, 3)])
    return params, cloud, target


def relative_errors(analytic, fd, floor=1e-8):
    out = []
    for a, b in zip(analytic, fd):
        m = max(abs(a), abs(b))
        out.append(abs(a - b) / m if m > floor else 0.0)
    return np.array(out)


def piecewise_check(params, cloud, target, h=H):
    _, _, g = pose_loss_and_grad(params, cloud, CAM, target, LAMBDA)
    order, sign = base_piece(params, cloud, target)
    fd = np.empty(7)
    for i in range(7):
        e = np.zeros(7)
        e[i] = h
        fd[i] = (frozen_piece_loss(params + e, cloud, target, order, sign)
                 - frozen_piece_loss(params - e, cloud, target, order, sign)) / (2 * h)
    return g, fd, relative_errors(g, fd)


def naive_check(params, cloud, target, h=H):
    _, _, g = pose_loss_and_grad(params, cloud, CAM, target, LAMBDA)
    fd = np.empty(7)
    for i in range(7):
        e = np.zeros(7)
        e[i] = h
        fd[i] = (pose_loss_and_grad(params + e, cloud, CAM, target, LAMBDA)[0]
                 - pose_loss_and_grad(params - e, cloud, CAM, target, LAMBDA)[0]) / (2 * h)
    return g, fd, relative_errors(g, fd)
