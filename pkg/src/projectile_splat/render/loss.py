from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .ssim import ssim


@dataclass(frozen=True)
class LossWeights:
    """Photometric D-SSIM mix plus the three per-frame objective weights."""

    lambda_dssim: float = 0.2
    lambda_gs: float = 0.7
    lambda_acc: float = 0.2
    lambda_smooth: float = 0.1

    def __post_init__(self):
        if not 0.0 <= self.lambda_dssim <= 1.0:
            raise InvalidInputError("lambda_dssim must lie in [0, 1]")
        parts = (self.lambda_gs, self.lambda_acc, self.lambda_smooth)
        if min(parts) < 0:
            raise InvalidInputError("objective weights must be nonnegative")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise InvalidInputError(f"objective weights must sum to 1, got {sum(parts)!r}")

    def without(self, *names):
        """Zero the named objective weights and renormalise the rest."""
        vals = {"gs": self.lambda_gs, "acc": self.lambda_acc, "smooth": self.lambda_smooth}
        for name in names:
            vals[name] = 0.0
        total = sum(vals.values())
        if total <= 0:
            raise InvalidInputError("cannot zero every objective weight")
        return LossWeights(self.lambda_dssim, vals["gs"] / total,
                           vals["acc"] / total, vals["smooth"] / total)


def _rgb(img):
    return img.rgb if hasattr(img, "rgb") else np.asarray(img, dtype=np.float64)


def photometric_loss(rendered, target, lambda_dssim, with_grad=False):
    """(1 - lambda) * mean |I - T| + lambda * (1 - SSIM) / 2, over RGB.

    With ``with_grad`` also returns dL/d(rendered rgb).
    """
    x, y = _rgb(rendered), _rgb(target)
    if x.shape != y.shape:
        raise InvalidInputError(f"image shapes differ: {x.shape} vs {y.shape}")
    diff = x - y
    l1 = np.abs(diff).mean()
    if lambda_dssim == 0.0:
        s, g_ssim = 1.0, None
    elif with_grad:
        s, g_ssim = ssim(x, y, with_grad=True)
    else:
        s = ssim(x, y)
    loss = (1.0 - lambda_dssim) * l1 + lambda_dssim * (1.0 - s) / 2.0
    if not with_grad:
        return float(loss)
    grad = (1.0 - lambda_dssim) * np.sign(diff) / diff.size
    if g_ssim is not None:
        grad -= 0.5 * lambda_dssim * g_ssim
    return float(loss), grad


def loss_gs(rendered, target, lambda_dssim=0.2):
    return photometric_loss(rendered, target, lambda_dssim)
