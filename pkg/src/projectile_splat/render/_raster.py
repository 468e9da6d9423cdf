"""Front-to-back splat compositing and its adjoint.

Inputs are screen-space kernels already sorted near to far: centre (u, v),
pixel-space standard deviation r, opacity and RGB colour. Pixel (x, y)
samples the plane at integer coordinates (column x, row y).

The footprint is the Gaussian itself out to ``TAPER_START`` standard
deviations, then multiplied by a smootherstep that reaches zero (with zero
first and second derivatives) at ``TRUNC``. Peak weight equals the opacity.
A hard cutoff would make the image jump as pixels enter the support, and
finite-difference gradient checks would see it.
"""
import math

import numpy as np

from .._accel import njit, use_numba

TRUNC = 3.0
TAPER_START = 2.0
W_MAX = 0.99


@njit
def _taper(d, r):
    """Smootherstep cutoff S and dS/dx, x = d / r - TAPER_START."""
    xx = d / r - TAPER_START
    s = 1.0 - xx * xx * xx * (10.0 - 15.0 * xx + 6.0 * xx * xx)
    ds = -30.0 * xx * xx * (1.0 - xx) * (1.0 - xx)
    return s, ds


def _box(u, v, r, width, height):
    ext = TRUNC * r
    if not (u + ext >= 0 and u - ext <= width - 1 and v + ext >= 0 and v - ext <= height - 1):
        return None
    x0 = max(0, int(math.ceil(u - ext)))
    x1 = min(width - 1, int(math.floor(u + ext)))
    y0 = max(0, int(math.ceil(v - ext)))
    y1 = min(height - 1, int(math.floor(v + ext)))
    if x0 > x1 or y0 > y1:
        return None
    return x0, x1, y0, y1


@njit
def _forward_numba(u, v, r, opa, col, width, height):
    rgb = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    for k in range(u.shape[0]):
        ext = TRUNC * r[k]
        if u[k] + ext < 0 or u[k] - ext > width - 1 or v[k] + ext < 0 or v[k] - ext > height - 1:
            continue
        x0 = max(0, int(math.ceil(u[k] - ext)))
        x1 = min(width - 1, int(math.floor(u[k] + ext)))
        y0 = max(0, int(math.ceil(v[k] - ext)))
        y1 = min(height - 1, int(math.floor(v[k] + ext)))
        lim = ext * ext
        start2 = (TAPER_START * r[k]) ** 2
        inv2 = 0.5 / (r[k] * r[k])
        for y in range(y0, y1 + 1):
            dy = y - v[k]
            for x in range(x0, x1 + 1):
                dx = x - u[k]
                d2 = dx * dx + dy * dy
                if d2 >= lim:
                    continue
                w = opa[k] * math.exp(-d2 * inv2)
                if d2 > start2:
                    w *= _taper(math.sqrt(d2), r[k])[0]
                if w > W_MAX:
                    w = W_MAX
                t = trans[y, x]
                for c in range(3):
                    rgb[y, x, c] += t * w * col[k, c]
                trans[y, x] = t * (1.0 - w)
    return rgb, trans


@njit
def _backward_numba(u, v, r, opa, col, trans_final, grad_rgb):
    height, width = trans_final.shape
    n = u.shape[0]
    trans = trans_final.copy()
    behind = np.zeros((height, width, 3))
    gu = np.zeros(n)
    gv = np.zeros(n)
    gr = np.zeros(n)
    for k in range(n - 1, -1, -1):
        ext = TRUNC * r[k]
        if u[k] + ext < 0 or u[k] - ext > width - 1 or v[k] + ext < 0 or v[k] - ext > height - 1:
            continue
        x0 = max(0, int(math.ceil(u[k] - ext)))
        x1 = min(width - 1, int(math.floor(u[k] + ext)))
        y0 = max(0, int(math.ceil(v[k] - ext)))
        y1 = min(height - 1, int(math.floor(v[k] + ext)))
        lim = ext * ext
        start2 = (TAPER_START * r[k]) ** 2
        r2 = r[k] * r[k]
        inv2 = 0.5 / r2
        acc_u = 0.0
        acc_v = 0.0
        acc_r = 0.0
        for y in range(y0, y1 + 1):
            dy = y - v[k]
            for x in range(x0, x1 + 1):
                dx = x - u[k]
                d2 = dx * dx + dy * dy
                if d2 >= lim:
                    continue
                g = opa[k] * math.exp(-d2 * inv2)
                # w = g * S; du and dv factors are g * (x - u) * f_uv, dr factor g * f_r
                f_uv = 1.0 / r2
                f_r = d2 / (r2 * r[k])
                w = g
                if d2 > start2:
                    d = math.sqrt(d2)
                    sv, ds = _taper(d, r[k])
                    w = g * sv
                    f_uv = sv / r2 - ds / (r[k] * d)
                    f_r = d2 * sv / (r2 * r[k]) - d * ds / r2
                clamped = w > W_MAX
                if clamped:
                    w = W_MAX
                t_before = trans[y, x] / (1.0 - w)
                dl_dw = 0.0
                for c in range(3):
                    dl_dw += grad_rgb[y, x, c] * (col[k, c] - behind[y, x, c])
                    behind[y, x, c] = w * col[k, c] + (1.0 - w) * behind[y, x, c]
                dl_dw *= t_before
                trans[y, x] = t_before
                if not clamped:
                    common = dl_dw * g
                    acc_u += common * dx * f_uv
                    acc_v += common * dy * f_uv
                    acc_r += common * f_r
        gu[k] = acc_u
        gv[k] = acc_v
        gr[k] = acc_r
    return gu, gv, gr


def _footprint(u, v, r, opa, box):
    x0, x1, y0, y1 = box
    xs = np.arange(x0, x1 + 1, dtype=np.float64)
    ys = np.arange(y0, y1 + 1, dtype=np.float64)
    dx = xs[None, :] - u
    dy = ys[:, None] - v
    d2 = dx * dx + dy * dy
    inside = d2 < (TRUNC * r) ** 2
    g = np.where(inside, opa * np.exp(-0.5 * d2 / (r * r)), 0.0)
    d = np.sqrt(d2)
    tapered = d2 > (TAPER_START * r) ** 2
    xx = np.where(tapered, d / r - TAPER_START, 0.0)
    sv = 1.0 - xx ** 3 * (10.0 - 15.0 * xx + 6.0 * xx * xx)
    ds = -30.0 * xx * xx * (1.0 - xx) ** 2
    safe_d = np.where(tapered, d, 1.0)
    f_uv = sv / (r * r) - ds / (r * safe_d)
    f_r = d2 * sv / r ** 3 - d * ds / (r * r)
    w = g * sv
    clamped = w > W_MAX
    w = np.minimum(w, W_MAX)
    return dx, dy, f_uv, f_r, g, w, clamped


def _forward_numpy(u, v, r, opa, col, width, height):
    rgb = np.zeros((height, width, 3))
    trans = np.ones((height, width))
    for k in range(u.shape[0]):
        box = _box(u[k], v[k], r[k], width, height)
        if box is None:
            continue
        x0, x1, y0, y1 = box
        w = _footprint(u[k], v[k], r[k], opa[k], box)[5]
        t = trans[y0:y1 + 1, x0:x1 + 1]
        rgb[y0:y1 + 1, x0:x1 + 1] += (t * w)[..., None] * col[k]
        trans[y0:y1 + 1, x0:x1 + 1] = t * (1.0 - w)
    return rgb, trans


def _backward_numpy(u, v, r, opa, col, trans_final, grad_rgb):
    height, width = trans_final.shape
    n = u.shape[0]
    trans = trans_final.copy()
    behind = np.zeros((height, width, 3))
    gu, gv, gr = np.zeros(n), np.zeros(n), np.zeros(n)
    for k in range(n - 1, -1, -1):
        box = _box(u[k], v[k], r[k], width, height)
        if box is None:
            continue
        x0, x1, y0, y1 = box
        dx, dy, f_uv, f_r, g, w, clamped = _footprint(u[k], v[k], r[k], opa[k], box)
        sl = (slice(y0, y1 + 1), slice(x0, x1 + 1))
        t_before = trans[sl] / (1.0 - w)
        dl_dw = t_before * (grad_rgb[sl] * (col[k] - behind[sl])).sum(-1)
        behind[sl] = w[..., None] * col[k] + (1.0 - w[..., None]) * behind[sl]
        trans[sl] = t_before
        common = np.where(clamped, 0.0, dl_dw * g)
        gu[k] = (common * dx * f_uv).sum()
        gv[k] = (common * dy * f_uv).sum()
        gr[k] = (common * f_r).sum()
    return gu, gv, gr


def _prep(u, v, r, opa, col):
    return tuple(np.ascontiguousarray(a, dtype=np.float64) for a in (u, v, r, opa, col))


def composite(u, v, r, opa, col, width, height):
    """Render sorted screen-space kernels; returns (rgb, final transmittance)."""
    args = _prep(u, v, r, opa, col)
    if use_numba():
        return _forward_numba(*args, int(width), int(height))
    return _forward_numpy(*args, int(width), int(height))


def composite_backward(u, v, r, opa, col, trans_final, grad_rgb):
    """Gradient of a scalar loss w.r.t. (u, v, r) given dL/d(rgb)."""
    args = _prep(u, v, r, opa, col)
    trans_final = np.ascontiguousarray(trans_final, dtype=np.float64)
    grad_rgb = np.ascontiguousarray(grad_rgb, dtype=np.float64)
    if use_numba():
        return _backward_numba(*args, trans_final, grad_rgb)
    return _backward_numpy(*args, trans_final, grad_rgb)
