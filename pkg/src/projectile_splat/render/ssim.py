"""Gaussian-window SSIM on [0, 1] images with an exact gradient.

Statistics are evaluated only where the 11x11 window lies fully inside the
image (the same region scikit-image averages over), and the mean is taken
over those positions and all channels.
"""
import numpy as np

from .._accel import njit, use_numba

WINDOW = 11
SIGMA = 1.5
C1 = 0.01 ** 2
C2 = 0.03 ** 2


def gaussian_taps(size=WINDOW, sigma=SIGMA):
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-0.5 * (x / sigma) ** 2)
    return g / g.sum()


_TAPS = gaussian_taps()


def _filter_valid_numpy(a, axis):
    n = a.shape[axis] - WINDOW + 1
    idx = [slice(None)] * a.ndim
    out = None
    for k, wk in enumerate(_TAPS):
        idx[axis] = slice(k, k + n)
        part = wk * a[tuple(idx)]
        out = part if out is None else out + part
    return out


def _adjoint_valid_numpy(m, axis, size):
    shape = list(m.shape)
    shape[axis] = size
    out = np.zeros(shape)
    n = m.shape[axis]
    idx = [slice(None)] * m.ndim
    for k, wk in enumerate(_TAPS):
        idx[axis] = slice(k, k + n)
        out[tuple(idx)] += wk * m
    return out


@njit
def _filter_valid2_numba(a, taps):
    # a: (S, C, H, W) -> (S, C, H - K + 1, W - K + 1); rows then columns
    ns, c, h, w = a.shape
    k = taps.shape[0]
    oh = h - k + 1
    ow = w - k + 1
    out = np.zeros((ns, c, oh, ow))
    tmp = np.empty((oh, w))
    for s in range(ns):
        for ch in range(c):
            tmp[:, :] = 0.0
            for i in range(oh):
                for t in range(k):
                    wt = taps[t]
                    for j in range(w):
                        tmp[i, j] += wt * a[s, ch, i + t, j]
            for i in range(oh):
                for t in range(k):
                    wt = taps[t]
                    for j in range(ow):
                        out[s, ch, i, j] += wt * tmp[i, j + t]
    return out


@njit
def _adjoint_valid2_numba(m, taps, h, w):
    ns, c, oh, ow = m.shape
    k = taps.shape[0]
    out = np.zeros((ns, c, h, w))
    tmp = np.empty((oh, w))
    for s in range(ns):
        for ch in range(c):
            tmp[:, :] = 0.0
            for i in range(oh):
                for t in range(k):
                    wt = taps[t]
                    for j in range(ow):
                        tmp[i, j + t] += wt * m[s, ch, i, j]
            for i in range(oh):
                for t in range(k):
                    wt = taps[t]
                    for j in range(w):
                        out[s, ch, i + t, j] += wt * tmp[i, j]
    return out


@njit
def _nonzero_bbox_numba(x, y):
    h, w, c = x.shape
    r0, r1, c0, c1 = h, -1, w, -1
    for i in range(h):
        for j in range(w):
            for ch in range(c):
                if x[i, j, ch] != 0.0 or y[i, j, ch] != 0.0:
                    if i < r0:
                        r0 = i
                    if i > r1:
                        r1 = i
                    if j < c0:
                        c0 = j
                    if j > c1:
                        c1 = j
                    break
    return r0, r1, c0, c1


def _nonzero_bbox(x, y):
    if use_numba():
        r0, r1, c0, c1 = _nonzero_bbox_numba(x, y)
        return None if r1 < 0 else (r0, r1, c0, c1)
    nz = np.any(x != 0, axis=2) | np.any(y != 0, axis=2)
    rows = np.flatnonzero(nz.any(axis=1))
    if rows.size == 0:
        return None
    cols = np.flatnonzero(nz.any(axis=0))
    return rows[0], rows[-1], cols[0], cols[-1]


def _filter_valid2(a):
    """Separable window filter over the last two axes of an (S, C, H, W) stack."""
    if use_numba():
        return _filter_valid2_numba(np.ascontiguousarray(a), _TAPS)
    return _filter_valid_numpy(_filter_valid_numpy(a, -2), -1)


def _adjoint_valid2(m, h, w):
    if use_numba():
        return _adjoint_valid2_numba(np.ascontiguousarray(m), _TAPS, h, w)
    return _adjoint_valid_numpy(_adjoint_valid_numpy(m, -1, w), -2, h)


def _roi(x, y):
    """Row/column slices covering every window that sees a nonzero pixel.

    Windows outside this region see two all-zero patches and score exactly 1.
    """
    h, w = x.shape[:2]
    box = _nonzero_bbox(x, y)
    if box is None:
        return None
    r0, r1, c0, c1 = box
    return (slice(max(0, r0 - (WINDOW - 1)), min(h, r1 + WINDOW)),
            slice(max(0, c0 - (WINDOW - 1)), min(w, c1 + WINDOW)))


def ssim(x, y, with_grad=False):
    """Mean SSIM of ``x`` against ``y`` (both (H, W, C)); optionally d/dx."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    h, w, c = x.shape
    if h < WINDOW or w < WINDOW:
        raise ValueError(f"images must be at least {WINDOW} x {WINDOW}")
    total_positions = (h - WINDOW + 1) * (w - WINDOW + 1) * c
    roi = _roi(x, y)
    if roi is None:
        return (1.0, np.zeros_like(x)) if with_grad else 1.0
    # channel-first working layout keeps the filter loops contiguous
    xs = np.ascontiguousarray(x[roi].transpose(2, 0, 1))
    ys = np.ascontiguousarray(y[roi].transpose(2, 0, 1))
    sh, sw = xs.shape[1:]
    stats = _filter_valid2(np.stack([xs, ys, xs * xs, ys * ys, xs * ys]))
    mu_x, mu_y, exx, eyy, exy = stats
    var_x = exx - mu_x * mu_x
    var_y = eyy - mu_y * mu_y
    cov = exy - mu_x * mu_y
    a = 2 * mu_x * mu_y + C1
    b = 2 * cov + C2
    cl = mu_x * mu_x + mu_y * mu_y + C1
    d = var_x + var_y + C2
    smap = (a * b) / (cl * d)
    inside = smap.size
    value = (smap.sum() + (total_positions - inside)) / total_positions
    if not with_grad:
        return float(value)
    ds_dmux = 2 * mu_y * b / (cl * d) - smap * 2 * mu_x / cl
    ds_dvarx = -smap / d
    ds_dcov = 2 * a / (cl * d)
    g_lin = ds_dmux - 2 * mu_x * ds_dvarx - mu_y * ds_dcov
    back = _adjoint_valid2(np.stack([g_lin, ds_dvarx, ds_dcov]), sh, sw)
    grad_roi = (back[0] + 2 * xs * back[1] + ys * back[2]) / total_positions
    grad = np.zeros_like(x)
    grad[roi] = grad_roi.transpose(1, 2, 0)
    return float(value), grad
