"""Batch weighted-least-squares oracle for the linear-Gaussian filter.

Stacks the prior on x0, every process step and every observation into one
whitened linear system and solves it directly. The last state of that
solution equals the filtered estimate after the last update.
"""
import numpy as np

H = np.array([[1.0, 0.0], [1.0, 0.0]])


def batch_final_state(x0, P0, accels, obs, dt, Q, R):
    F = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([0.5 * dt * dt, dt])
    k = len(obs)
    n = 2 * (k + 1)
    rows, rhs = [], []

    def add(block_cols, cov, target):
        w = np.linalg.cholesky(np.linalg.inv(cov)).T
        a = np.zeros((cov.shape[0], n))
        for col, m in block_cols:
            a[:, 2 * col:2 * col + 2] += m
        rows.append(w @ a)
        rhs.append(w @ target)

    add([(0, np.eye(2))], P0, np.asarray(x0, dtype=float))
    for i in range(1, k + 1):
        add([(i, np.eye(2)), (i - 1, -F)], Q, B * accels[i - 1])
        add([(i, H)], R, np.asarray(obs[i - 1], dtype=float))
    sol = np.linalg.lstsq(np.vstack(rows), np.concatenate(rhs), rcond=None)[0]
    return sol[-2:]


def random_sequence(rng):
    k = int(rng.integers(1, 11))
    dt = rng.uniform(0.01, 0.5)
    Q = np.diag(rng.uniform(1e-4, 1e-1, 2))
    R = np.diag(rng.uniform(1e-3, 1.0, 2))
    a = rng.normal(0, 2, 2 * 2)
    P0 = np.diag(rng.uniform(0.01, 2.0, 2))
    x0 = rng.normal(0, 1, 2)
    F = np.array([[1.0, dt], [0.0, 1.0]])
    B = np.array([0.5 * dt * dt, dt])
    accels = rng.normal(0, 3, k)
    x = rng.multivariate_normal(x0, P0)
    obs = []
    for i in range(k):
        x = F @ x + B * accels[i] + rng.multivariate_normal(np.zeros(2), Q)
        obs.append(H @ x + rng.multivariate_normal(np.zeros(2), R))
    del a
    return x0, P0, accels, obs, dt, Q, R
