"""Per-axis constant-acceleration Kalman filter fusing two displacement sensors.

State per axis is X = [ds, v]: the displacement accumulated since the last
anchor and the current velocity. Both sensors observe the
displacement, so H = [[1, 0], [1, 0]] and R = diag(flow, learn).
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularMatrixError

H = np.array([[1.0, 0.0], [1.0, 0.0]])
PSD_TOL = -1e-9


@dataclass(frozen=True)
class MotionState:
    displacement: float
    velocity: float

    def __post_init__(self):
        if not (np.isfinite(self.displacement) and np.isfinite(self.velocity)):
            raise InvalidInputError("motion state must be finite")

    def vector(self):
        return np.array([self.displacement, self.velocity], dtype=np.float64)

    @classmethod
    def from_vector(cls, x):
        return cls(float(x[0]), float(x[1]))


class StateCovariance:
    """Symmetric PSD 2x2 covariance, symmetrised on construction."""

    def __init__(self, matrix):
        m = np.array(matrix, dtype=np.float64).reshape(2, 2)
        if not np.all(np.isfinite(m)):
            raise InvalidInputError("covariance must be finite")
        if abs(m[0, 1] - m[1, 0]) > 1e-12 * max(1.0, np.abs(m).max()):
            raise InvalidInputError("covariance must be symmetric")
        m = 0.5 * (m + m.T)
        if np.linalg.eigvalsh(m).min() < PSD_TOL * max(1.0, np.abs(m).max()):
            raise InvalidInputError("covariance must be positive semidefinite")
        m.setflags(write=False)
        self.matrix = m

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)

    def __repr__(self):
        return f"StateCovariance({self.matrix.tolist()})"


@dataclass(frozen=True)
class NoiseConfig:
    sigma_ds_sq: float = 1e-3 ** 2
    sigma_v_sq: float = 1e-2 ** 2
    sigma_flow_sq: float = 5e-3 ** 2
    sigma_learn_sq: float = 2e-3 ** 2

    def __post_init__(self):
        vals = (self.sigma_ds_sq, self.sigma_v_sq, self.sigma_flow_sq, self.sigma_learn_sq)
        if any(not np.isfinite(v) or v < 0 for v in vals):
            raise InvalidInputError("noise variances must be finite and nonnegative")
        if self.sigma_flow_sq == 0 and self.sigma_learn_sq == 0:
            raise InvalidInputError("at least one observation variance must be positive")

    @property
    def Q(self):
        return np.diag([self.sigma_ds_sq, self.sigma_v_sq])

    @property
    def R(self):
        return np.diag([self.sigma_flow_sq, self.sigma_learn_sq])

    def with_flow(self, sigma_flow_sq):
        return NoiseConfig(self.sigma_ds_sq, self.sigma_v_sq, float(sigma_flow_sq), self.sigma_learn_sq)


@dataclass(frozen=True)
class ObservationPair:
    z_flow: float
    z_learn: float

    def __post_init__(self):
        if not (np.isfinite(self.z_flow) and np.isfinite(self.z_learn)):
            raise InvalidInputError("observations must be finite")

    def vector(self):
        return np.array([self.z_flow, self.z_learn], dtype=np.float64)


def transition(dt):
    if not dt > 0:
        raise InvalidInputError("dt must be > 0")
    return np.array([[1.0, dt], [0.0, 1.0]]), np.array([0.5 * dt * dt, dt])


def predict(state, P, a, dt, noise):
    F, B = transition(dt)
    x = F @ state.vector() + B * a
    p = F @ np.asarray(P, dtype=np.float64) @ F.T + noise.Q
    return MotionState.from_vector(x), StateCovariance(0.5 * (p + p.T))


def gain(P_pred, noise):
    p = np.asarray(P_pred, dtype=np.float64)
    S = H @ p @ H.T + noise.R
    # both rows observe ds, so det S expands without the cancellation of S00*S11 - S01^2
    pdd, rf, rl = p[0, 0], noise.sigma_flow_sq, noise.sigma_learn_sq
    det = pdd * (rf + rl) + rf * rl
    if not np.isfinite(det) or det <= 1e-14 * S[0, 0] * S[1, 1]:
        raise SingularMatrixError("innovation covariance is singular")
    # P H^T has two equal columns, so each row of P H^T S^-1 reduces to [rl, rf] / det
    return np.outer(p[:, 0], [rl, rf]) / det


def update(X_pred, P_pred, z, noise):
    p = np.asarray(P_pred, dtype=np.float64)
    K = gain(p, noise)
    x = X_pred.vector()
    innov = z.vector() - H @ x
    x_post = x + K @ innov
    # Joseph form keeps P symmetric PSD under rounding; equals (I - KH) P for the optimal gain
    A = np.eye(2) - K @ H
    p_post = A @ p @ A.T + K @ noise.R @ K.T
    return MotionState.from_vector(x_post), StateCovariance(0.5 * (p_post + p_post.T))


def backproject_flow(pixel_displacement, depth, cam):
    """World displacement of a pixel-space motion at the given camera depth."""
    if not depth > 0:
        raise InvalidInputError("depth must be > 0")
    du, dv = np.asarray(pixel_displacement, dtype=np.float64).reshape(2)
    d_cam = np.array([du * depth / cam.focal, dv * depth / cam.focal, 0.0])
    return cam.rotation.T @ d_cam


def flow_axis_variances(cam, depth, flow_noise_px, unobserved_var):
    """Per-world-axis variance of a back-projected flow displacement.

    Pixel noise maps to ``(flow_noise_px * depth / focal)**2`` on the two
    image axes; motion along the optical axis is invisible to flow and gets
    ``unobserved_var``.
    """
    s2 = (flow_noise_px * depth / cam.focal) ** 2
    cov_cam = np.diag([s2, s2, unobserved_var])
    rot = cam.rotation
    return np.diag(rot.T @ cov_cam @ rot).copy()


class AxisFilter:
    """One scalar-axis filter whose displacement state is re-anchored every frame."""

    def __init__(self, velocity=0.0, velocity_var=1.0):
        self.state = MotionState(0.0, float(velocity))
        self.P = StateCovariance([[0.0, 0.0], [0.0, float(velocity_var)]])

    def step(self, z, a, dt, noise):
        """Predict, update, then re-anchor. Returns a trace dict."""
        x_pred, p_pred = predict(self.state, self.P, a, dt, noise)
        K = gain(p_pred, noise)
        x_post, p_post = update(x_pred, p_pred, z, noise)
        # the fused interval displacement becomes the new anchor; the
        # posterior velocity already refers to the end of the interval
        pm = p_post.matrix
        self.state = MotionState(0.0, x_post.velocity)
        self.P = StateCovariance([[0.0, 0.0], [0.0, max(pm[1, 1], 0.0)]])
        return {"prior_ds": x_pred.displacement, "prior_v": x_pred.velocity,
                "z_flow": z.z_flow, "z_learn": z.z_learn,
                "k_flow": K[0, 0], "k_learn": K[0, 1],
                "post_ds": x_post.displacement, "post_v": x_post.velocity,
                "post_var_ds": pm[0, 0]}

    def predicted_displacement(self, a, dt):
        F, B = transition(dt)
        return float((F @ self.state.vector() + B * a)[0])


def fuse_frame(filters, observations, a_vector, dt, noise):
    """Run predict and update on each axis filter.

    ``noise`` is a NoiseConfig or a sequence of three (one per axis).
    Returns (fused displacement 3-vector, list of per-axis trace dicts).
    """
    if len(filters) != 3 or len(observations) != 3:
        raise InvalidInputError("expected three axis filters and three observations")
    noises = noise if isinstance(noise, (list, tuple)) else [noise] * 3
    a_vector = np.asarray(a_vector, dtype=np.float64).reshape(3)
    fused = np.empty(3)
    traces = []
    for k in range(3):
        tr = filters[k].step(observations[k], a_vector[k], dt, noises[k])
        fused[k] = tr["post_ds"]
        traces.append(tr)
    return fused, traces
