"""8-bit PNG read/write for rendered frames and silhouette masks."""
import numpy as np
from PIL import Image

from .render.splat import RenderedImage


def _to_u8(a):
    return np.clip(np.rint(np.asarray(a) * 255.0), 0, 255).astype(np.uint8)


def save_rgba(path, image):
    rgba = np.concatenate([image.rgb, image.alpha[..., None]], axis=-1)
    Image.fromarray(_to_u8(rgba), mode="RGBA").save(path)


def load_rgba(path):
    a = np.asarray(Image.open(path).convert("RGBA"), dtype=np.float64) / 255.0
    return RenderedImage(a[..., :3].copy(), a[..., 3].copy())


def save_mask(path, mask):
    Image.fromarray(np.asarray(mask, dtype=np.uint8) * 255, mode="L").save(path)


def load_mask(path):
    return np.asarray(Image.open(path).convert("L")) > 127
