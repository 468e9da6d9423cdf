from .camera import Camera, project, project_points
from .loss import LossWeights, loss_gs, photometric_loss
from .splat import (
    RenderedImage,
    pose_loss_and_grad,
    pose_photometric_gradient,
    render_loss_and_grad,
    similarity_loss_and_grad,
    splat_render,
)
from .ssim import ssim

__all__ = [
    "Camera", "project", "project_points", "LossWeights", "loss_gs", "photometric_loss",
    "RenderedImage", "pose_loss_and_grad", "pose_photometric_gradient",
    "render_loss_and_grad", "similarity_loss_and_grad", "splat_render", "ssim",
]
