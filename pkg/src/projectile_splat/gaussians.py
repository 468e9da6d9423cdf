"""Gaussian point-cloud model: kernels, density control, isotropization, centroid."""
import json
from dataclasses import dataclass

import numpy as np

from ._accel import njit, use_numba
from .errors import AllPrunedError, InsufficientPointsError, InvalidInputError

SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class GaussianKernel:
    position: np.ndarray
    covariance: np.ndarray
    color: np.ndarray
    opacity: float


@dataclass(frozen=True)
class IsotropicKernel:
    position: np.ndarray
    radius: float
    color: np.ndarray
    opacity: float


@dataclass(frozen=True)
class PruneConfig:
    tau_L: float = 0.05
    tau_D: float = 1.0

    def __post_init__(self):
        if not (self.tau_L > 0 and self.tau_D > 0):
            raise InvalidInputError("prune thresholds must be strictly positive")


class GaussianCloud:
    """Ordered set of Gaussian kernels stored as parallel arrays.

    Exactly one of ``covariances`` (anisotropic form, shape (N, 3, 3)) or
    ``radii`` (isotropic form, shape (N,)) is set.
    """

    def __init__(self, positions, colors, opacities, covariances=None, radii=None):
        positions = np.array(positions, dtype=np.float64).reshape(-1, 3)
        n = positions.shape[0]
        colors = np.array(colors, dtype=np.float64).reshape(n, 3)
        opacities = np.array(opacities, dtype=np.float64).reshape(n)
        if (covariances is None) == (radii is None):
            raise InvalidInputError("give exactly one of covariances or radii")
        if covariances is not None:
            covariances = np.array(covariances, dtype=np.float64).reshape(n, 3, 3)
            if not np.all(np.isfinite(covariances)):
                raise InvalidInputError("non-finite covariance entries")
        if radii is not None:
            radii = np.array(radii, dtype=np.float64).reshape(n)
            if np.any(~np.isfinite(radii)) or np.any(radii <= 0):
                raise InvalidInputError("radii must be finite and > 0")
        if not np.all(np.isfinite(positions)):
            raise InvalidInputError("non-finite kernel positions")
        if np.any(colors < 0) or np.any(colors > 1):
            raise InvalidInputError("colors must lie in [0, 1]")
        if np.any(opacities <= 0) or np.any(opacities > 1):
            raise InvalidInputError("opacities must lie in (0, 1]")
        self.positions = positions
        self.colors = colors
        self.opacities = opacities
        self.covariances = covariances
        self.radii = radii
        for arr in (positions, colors, opacities, covariances, radii):
            if arr is not None:
                arr.setflags(write=False)

    def __len__(self):
        return self.positions.shape[0]

    def __repr__(self):
        kind = "isotropic" if self.is_isotropic else "anisotropic"
        return f"GaussianCloud(n={len(self)}, {kind})"

    @property
    def is_isotropic(self):
        return self.radii is not None

    def kernels(self):
        for i in range(len(self)):
            if self.is_isotropic:
                yield IsotropicKernel(self.positions[i], float(self.radii[i]),
                                      self.colors[i], float(self.opacities[i]))
            else:
                yield GaussianKernel(self.positions[i], self.covariances[i],
                                     self.colors[i], float(self.opacities[i]))

    @classmethod
    def from_kernels(cls, kernels):
        kernels = list(kernels)
        if not kernels:
            raise InsufficientPointsError("cannot build a cloud from zero kernels")
        iso = isinstance(kernels[0], IsotropicKernel)
        pos = [k.position for k in kernels]
        col = [k.color for k in kernels]
        opa = [k.opacity for k in kernels]
        if iso:
            return cls(pos, col, opa, radii=[k.radius for k in kernels])
        return cls(pos, col, opa, covariances=[k.covariance for k in kernels])

    def subset(self, index):
        index = np.asarray(index)
        return GaussianCloud(
            self.positions[index], self.colors[index], self.opacities[index],
            covariances=None if self.covariances is None else self.covariances[index],
            radii=None if self.radii is None else self.radii[index],
        )

    def replace(self, positions=None, covariances=None, radii=None):
        """Copy with new geometry; appearance is kept."""
        pos = self.positions if positions is None else positions
        if self.is_isotropic:
            return GaussianCloud(pos, self.colors, self.opacities,
                                 radii=self.radii if radii is None else radii)
        return GaussianCloud(pos, self.colors, self.opacities,
                             covariances=self.covariances if covariances is None else covariances)

    def diameter(self):
        """Largest distance between two kernel positions."""
        p = self.positions
        if len(p) < 2:
            return 0.0
        d = np.sqrt(((p[:, None, :] - p[None, :, :]) ** 2).sum(-1))
        return float(d.max())

    def to_json(self):
        out = []
        for i in range(len(self)):
            item = {"pos": self.positions[i].tolist()}
            if self.is_isotropic:
                item["radius"] = float(self.radii[i])
            else:
                item["cov"] = self.covariances[i].reshape(9).tolist()
            item["rgb"] = self.colors[i].tolist()
            item["alpha"] = float(self.opacities[i])
            out.append(item)
        return out

    @classmethod
    def from_json(cls, items):
        if not items:
            raise InsufficientPointsError("cloud file holds no kernels")
        iso = "radius" in items[0]
        for item in items:
            if ("radius" in item) != iso:
                raise InvalidInputError("mixed isotropic and anisotropic kernels")
        pos = [it["pos"] for it in items]
        col = [it["rgb"] for it in items]
        opa = [it["alpha"] for it in items]
        if iso:
            return cls(pos, col, opa, radii=[it["radius"] for it in items])
        return cls(pos, col, opa, covariances=[np.reshape(it["cov"], (3, 3)) for it in items])


def save_cloud(cloud, path):
    with open(path, "w") as fh:
        json.dump(cloud.to_json(), fh)


def load_cloud(path):
    with open(path) as fh:
        return GaussianCloud.from_json(json.load(fh))


def symmetric_eigvals(cov):
    """Eigenvalues of symmetric 3x3 matrices, ascending, by the trigonometric method.

    Works on any leading batch shape. The input is symmetrised first.
    """
    a = np.asarray(cov, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("non-finite covariance entries")
    a = 0.5 * (a + np.swapaxes(a, -1, -2))
    a00, a11, a22 = a[..., 0, 0], a[..., 1, 1], a[..., 2, 2]
    a01, a02, a12 = a[..., 0, 1], a[..., 0, 2], a[..., 1, 2]
    p1 = a01 ** 2 + a02 ** 2 + a12 ** 2
    q = (a00 + a11 + a22) / 3.0
    p2 = (a00 - q) ** 2 + (a11 - q) ** 2 + (a22 - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    safe_p = np.where(p > 0, p, 1.0)
    b00, b11, b22 = (a00 - q) / safe_p, (a11 - q) / safe_p, (a22 - q) / safe_p
    b01, b02, b12 = a01 / safe_p, a02 / safe_p, a12 / safe_p
    det_b = (b00 * (b11 * b22 - b12 * b12)
             - b01 * (b01 * b22 - b12 * b02)
             + b02 * (b01 * b12 - b11 * b02))
    r = np.clip(det_b / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    e_hi = q + 2.0 * p * np.cos(phi)
    e_lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e_mid = 3.0 * q - e_hi - e_lo
    out = np.stack([e_lo, e_mid, e_hi], axis=-1)
    # p == 0 means a scalar multiple of the identity
    return np.where((p > 0)[..., None], np.sort(out, axis=-1), q[..., None] * np.ones(3))


def _kernel_covariance(kernel):
    cov = np.asarray(kernel.covariance if hasattr(kernel, "covariance") else kernel, dtype=np.float64)
    if cov.shape != (3, 3):
        raise InvalidInputError("covariance must be 3x3")
    return cov


def principal_axis_length(kernel):
    """Largest covariance eigenvalue of a kernel (or of a bare 3x3 matrix)."""
    lam = symmetric_eigvals(_kernel_covariance(kernel))
    if lam[0] <= 0:
        raise InvalidInputError("covariance is not positive definite")
    return float(lam[-1])


@njit
def _pair_stats_numba(pos):
    n = pos.shape[0]
    total = 0.0
    nn = np.full(n, np.inf)
    for m in range(n):
        for k in range(m + 1, n):
            dx = pos[m, 0] - pos[k, 0]
            dy = pos[m, 1] - pos[k, 1]
            dz = pos[m, 2] - pos[k, 2]
            d = np.sqrt(dx * dx + dy * dy + dz * dz)
            total += d
            if d < nn[m]:
                nn[m] = d
            if d < nn[k]:
                nn[k] = d
    return 2.0 * total / (n * n), nn


def _pair_stats_numpy(pos, chunk=512):
    n = pos.shape[0]
    total = 0.0
    nn = np.empty(n)
    for start in range(0, n, chunk):
        block = pos[start:start + chunk]
        d = np.sqrt(((block[:, None, :] - pos[None, :, :]) ** 2).sum(-1))
        total += d.sum()
        rows = np.arange(block.shape[0])
        d[rows, start + rows] = np.inf
        nn[start:start + chunk] = d.min(axis=1)
    return total / (n * n), nn


def _pair_stats(pos):
    pos = np.ascontiguousarray(pos, dtype=np.float64)
    if use_numba():
        return _pair_stats_numba(pos)
    return _pair_stats_numpy(pos)


def mean_pairwise_distance(cloud):
    """Average distance over all ordered kernel pairs, self-pairs included."""
    if len(cloud) < 2:
        raise InsufficientPointsError("mean pairwise distance needs at least 2 kernels")
    d_avg, _ = _pair_stats(cloud.positions)
    return float(d_avg)


def prune_mask(cloud, cfg):
    """Boolean keep-mask for the axial and outlier predicates of density control."""
    if len(cloud) < 2:
        raise InsufficientPointsError("pruning needs at least 2 kernels")
    d_avg, nn = _pair_stats(cloud.positions)
    if cloud.is_isotropic:
        # isotropic covariance is radius^2 * I
        axial = cloud.radii ** 2
    else:
        axial = symmetric_eigvals(cloud.covariances)[:, -1]
    return (axial <= cfg.tau_L) & (nn <= cfg.tau_D * d_avg)


def prune(cloud, cfg):
    keep = prune_mask(cloud, cfg)
    if not keep.any():
        raise AllPrunedError(f"all {len(cloud)} kernels violate the prune thresholds")
    return cloud.subset(np.flatnonzero(keep))


def isotropize(cloud):
    """Replace each covariance by a sphere of equal volume: radius = det(cov)^(1/6)."""
    if cloud.is_isotropic:
        return cloud
    lam = symmetric_eigvals(cloud.covariances)
    if np.any(lam[:, 0] <= 0):
        raise InvalidInputError("covariance is not positive definite")
    radii = np.prod(lam, axis=1) ** (1.0 / 6.0)
    return GaussianCloud(cloud.positions, cloud.colors, cloud.opacities, radii=radii)


def centroid_weights(cloud):
    """Normalised radius-cubed weights used by ``centroid``."""
    if len(cloud) == 0:
        raise InsufficientPointsError("centroid of an empty cloud")
    if not cloud.is_isotropic:
        raise InvalidInputError("centroid expects an isotropic cloud")
    w = cloud.radii ** 3
    return w / w.sum()


def centroid(cloud):
    """Mass-centre proxy: positions weighted by radius cubed."""
    w = centroid_weights(cloud)
    return w @ cloud.positions
