"""Newtonian consistency terms: finite-difference acceleration, gravity split,
acceleration-consistency loss and the constant-acceleration displacement law."""
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class PhysicsConfig:
    gravity_dir: np.ndarray = field(default_factory=lambda: np.array([0.0, -1.0, 0.0]))
    frame_dt: float = 1.0 / 30.0
    gravity_mag: float | None = 9.8

    def __post_init__(self):
        g = np.array(self.gravity_dir, dtype=np.float64).reshape(3)
        n = np.linalg.norm(g)
        if abs(n - 1.0) > 1e-9:
            if n == 0 or not np.isfinite(n):
                raise InvalidInputError("gravity direction must be nonzero")
            raise InvalidInputError(f"gravity direction must be unit length, |g| = {n}")
        object.__setattr__(self, "gravity_dir", g)
        if not self.frame_dt > 0:
            raise InvalidInputError("frame_dt must be > 0")

    @property
    def gravity_vector(self):
        """Gravity acceleration vector, or None when the magnitude is unknown."""
        if self.gravity_mag is None:
            return None
        return self.gravity_mag * self.gravity_dir

    def to_dict(self):
        return {"gravity_dir": self.gravity_dir.tolist(), "dt": self.frame_dt,
                "gravity_mag": self.gravity_mag}

    @classmethod
    def from_dict(cls, d):
        g = np.asarray(d.get("gravity_dir", [0.0, -1.0, 0.0]), dtype=np.float64)
        return cls(g / np.linalg.norm(g), float(d.get("dt", 1.0 / 30.0)), d.get("gravity_mag", 9.8))


@dataclass(frozen=True)
class CentroidSeries:
    timestamps: np.ndarray
    centroids: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.float64)
        cs = np.asarray(self.centroids, dtype=np.float64).reshape(-1, 3)
        if ts.shape[0] != cs.shape[0]:
            raise InvalidInputError("timestamps and centroids differ in length")
        if ts.size > 1 and np.any(np.diff(ts) <= 0):
            raise InvalidInputError("timestamps must be strictly increasing")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "centroids", cs)

    def check_uniform(self, dt, tol=1e-9):
        if self.timestamps.size > 1 and np.any(np.abs(np.diff(self.timestamps) - dt) > tol):
            raise InvalidInputError("timestamps are not uniformly spaced at frame_dt")

    def accelerations(self, dt):
        """Accelerations at every interior timestamp."""
        c = self.centroids
        return np.array([finite_diff_acceleration(c[i - 1], c[i], c[i + 1], dt)
                         for i in range(1, len(c) - 1)]).reshape(-1, 3)


def finite_diff_acceleration(prev, cur, nxt, dt):
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    prev, cur, nxt = (np.asarray(v, dtype=np.float64) for v in (prev, cur, nxt))
    return ((nxt - cur) - (cur - prev)) / (dt * dt)


def _unit(g):
    g = np.asarray(g, dtype=np.float64)
    if abs(np.linalg.norm(g) - 1.0) > UNIT_TOL:
        raise InvalidInputError("gravity direction is not unit length")
    return g


def decompose_acceleration(a, g):
    """Split ``a`` into parts parallel and orthogonal to unit direction ``g``."""
    g = _unit(g)
    a = np.asarray(a, dtype=np.float64)
    par = (a @ g) * g
    return par, a - par


def acc_consistency_residual(a_t, a_next, g, literal=False):
    """Vector whose squared norm is ``acc_consistency_loss``."""
    par_t, perp_t = decompose_acceleration(a_t, g)
    par_n, perp_n = decompose_acceleration(a_next, g)
    par_term = par_t if literal else par_n - par_t
    return par_term + (perp_n - perp_t)


def acc_consistency_loss(a_t, a_next, g, literal=False):
    """Squared change of acceleration between consecutive frames.

    The default penalises frame-to-frame change of both the gravity-parallel
    and the orthogonal component. ``literal=True`` instead keeps the raw
    parallel component of ``a_t`` inside the norm.
    """
    r = acc_consistency_residual(a_t, a_next, g, literal)
    return float(r @ r)


def acc_consistency_residual_jacobian(g, literal=False):
    """d(residual)/d(a_next) for the residual inside ``acc_consistency_loss``."""
    g = _unit(g)
    if literal:
        return np.eye(3) - np.outer(g, g)
    return np.eye(3)


def predicted_displacement(v0, a, t, dt):
    """Displacement over [t, t + dt] for uniform acceleration from velocity v0 at time 0."""
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    return (a * dt) * t + (0.5 * a * dt * dt + v0 * dt)
