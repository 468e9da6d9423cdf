import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from projectile_splat.errors import AllPrunedError, InsufficientPointsError, InvalidInputError
from projectile_splat.gaussians import (
    GaussianCloud, GaussianKernel, PruneConfig, centroid, centroid_weights, isotropize,
    load_cloud, mean_pairwise_distance, principal_axis_length, prune, save_cloud,
    symmetric_eigvals,
)


def aniso(positions, covs):
    n = len(positions)
    return GaussianCloud(positions, np.full((n, 3), 0.5), np.full(n, 0.8), covariances=covs)


def iso(positions, radii):
    n = len(positions)
    return GaussianCloud(positions, np.full((n, 3), 0.5), np.full(n, 0.8), radii=radii)


def rot_z(deg):
    a = np.radians(deg)
    return np.array([[np.cos(a), -np.sin(a), 0], [np.sin(a), np.cos(a), 0], [0, 0, 1]])


def char_poly_roots(m):
    # independent oracle: roots of det(lambda I - M) = 0 from its coefficients
    c2 = -np.trace(m)
    c1 = 0.5 * (np.trace(m) ** 2 - np.trace(m @ m))
    c0 = -np.linalg.det(m)
    return np.sort(np.roots([1.0, c2, c1, c0]).real)


class TestPrincipalAxis:
    def test_identity(self):
        assert principal_axis_length(np.eye(3)) == pytest.approx(1.0, abs=1e-12)

    def test_diagonal(self):
        assert principal_axis_length(np.diag([4.0, 1.0, 0.25])) == pytest.approx(4.0, abs=1e-12)

    def test_rotated(self):
        r = rot_z(45)
        cov = r @ np.diag([9.0, 1.0, 1.0]) @ r.T
        assert principal_axis_length(cov) == pytest.approx(char_poly_roots(cov)[-1], rel=1e-9)
        assert principal_axis_length(cov) == pytest.approx(9.0, rel=1e-9)

    def test_kernel_argument(self):
        k = GaussianKernel(np.zeros(3), np.diag([2.0, 3.0, 1.0]), np.zeros(3), 1.0)
        assert principal_axis_length(k) == pytest.approx(3.0)

    def test_non_finite(self):
        with pytest.raises(InvalidInputError):
            principal_axis_length(np.array([[np.nan, 0, 0], [0, 1, 0], [0, 0, 1]]))

    def test_eigvals_match_oracle_random(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            a = rng.normal(size=(3, 3))
            m = a @ a.T + 0.1 * np.eye(3)
            np.testing.assert_allclose(symmetric_eigvals(m), char_poly_roots(m), rtol=1e-8, atol=1e-10)


class TestMeanPairwise:
    def test_two(self):
        assert mean_pairwise_distance(iso([[0, 0, 0], [2, 0, 0]], [1, 1])) == pytest.approx(1.0)

    def test_coincident(self):
        assert mean_pairwise_distance(iso(np.zeros((4, 3)), np.ones(4))) == 0.0

    def test_three_collinear(self):
        c = iso([[0, 0, 0], [1, 0, 0], [2, 0, 0]], np.ones(3))
        assert mean_pairwise_distance(c) == pytest.approx(8 / 9, abs=1e-15)

    def test_needs_two(self):
        with pytest.raises(InsufficientPointsError):
            mean_pairwise_distance(iso([[0, 0, 0]], [1]))


def brute_prune_keep(pos, covs, tau_l, tau_d):
    n = len(pos)
    d = [[float(np.linalg.norm(np.subtract(pos[i], pos[j]))) for j in range(n)] for i in range(n)]
    d_avg = sum(map(sum, d)) / (n * n)
    keep = []
    for i in range(n):
        lam = max(char_poly_roots(np.asarray(covs[i])))
        nn = min(d[i][j] for j in range(n) if j != i)
        keep.append(lam <= tau_l and nn <= tau_d * d_avg)
    return np.array(keep)


class TestPrune:
    def test_loose_thresholds_keep_all(self):
        rng = np.random.default_rng(0)
        c = aniso(rng.normal(size=(10, 3)), np.tile(np.eye(3), (10, 1, 1)))
        out = prune(c, PruneConfig(1e12, 1e12))
        np.testing.assert_array_equal(out.positions, c.positions)

    def test_outlier_removed(self):
        c = aniso([[0, 0, 0], [1, 0, 0], [10, 0, 0]], np.tile(np.eye(3), (3, 1, 1)))
        assert mean_pairwise_distance(c) == pytest.approx(40 / 9)
        out = prune(c, PruneConfig(10.0, 1.0))
        np.testing.assert_array_equal(out.positions, [[0, 0, 0], [1, 0, 0]])

    def test_needle_removed(self):
        covs = np.tile(np.eye(3), (4, 1, 1))
        covs[2] = np.diag([100.0, 1.0, 1.0])
        c = aniso([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], covs)
        out = prune(c, PruneConfig(10.0, 10.0))
        np.testing.assert_array_equal(out.positions, [[0, 0, 0], [1, 0, 0], [1, 1, 0]])

    def test_all_pruned(self):
        c = aniso([[0, 0, 0], [1, 0, 0]], np.tile(np.eye(3) * 5, (2, 1, 1)))
        with pytest.raises(AllPrunedError):
            prune(c, PruneConfig(1.0, 10.0))

    def test_needs_two(self):
        with pytest.raises(InsufficientPointsError):
            prune(aniso([[0, 0, 0]], [np.eye(3)]), PruneConfig())

    def test_config_validation(self):
        with pytest.raises(InvalidInputError):
            PruneConfig(0.0, 1.0)
        with pytest.raises(InvalidInputError):
            PruneConfig(1.0, -1.0)

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(11)
        for trial in range(30):
            n = int(rng.integers(2, 51))
            pos = rng.normal(size=(n, 3)) * rng.uniform(0.2, 3.0)
            a = rng.normal(size=(n, 3, 3)) * rng.uniform(0.1, 1.0)
            covs = a @ a.transpose(0, 2, 1) + 0.01 * np.eye(3)
            tau_l, tau_d = rng.uniform(0.1, 3.0), rng.uniform(0.1, 1.5)
            keep = brute_prune_keep(pos, covs, tau_l, tau_d)
            c = aniso(pos, covs)
            if not keep.any():
                with pytest.raises(AllPrunedError):
                    prune(c, PruneConfig(tau_l, tau_d))
                continue
            out = prune(c, PruneConfig(tau_l, tau_d))
            np.testing.assert_array_equal(out.positions, pos[keep])


clouds = st.integers(3, 30).flatmap(lambda n: st.tuples(
    arrays(np.float64, (n, 3), elements=st.floats(-5, 5)),
    arrays(np.float64, (n,), elements=st.floats(0.05, 1.5)),
))


@given(clouds, st.floats(0.01, 3.0), st.floats(0.05, 2.0))
def test_prune_subset_order_and_second_pass(data, tau_l, tau_d):
    pos, radii = data
    n = len(pos)
    # distinct opacities tag each kernel so survivors can be traced back
    tags = np.linspace(0.1, 1.0, n)
    c = GaussianCloud(pos, np.full((n, 3), 0.5), tags, radii=radii)
    cfg = PruneConfig(tau_l, tau_d)
    try:
        out = prune(c, cfg)
    except AllPrunedError:
        return
    idx = [int(np.flatnonzero(tags == t)[0]) for t in out.opacities]
    assert idx == sorted(idx)
    np.testing.assert_array_equal(out.positions, pos[idx])
    removed_first = len(c) - len(out)
    if len(out) < 2:
        return
    try:
        second = prune(out, cfg)
    except AllPrunedError:
        second = None
    removed_second = len(out) - (0 if second is None else len(second))
    assert removed_second <= max(removed_first, len(out))


class TestIsotropize:
    def test_identity(self):
        assert isotropize(aniso([[0, 0, 0]], [np.eye(3)])).radii[0] == pytest.approx(1.0)

    def test_isotropic_input(self):
        assert isotropize(aniso([[0, 0, 0]], [4 * np.eye(3)])).radii[0] == pytest.approx(2.0)

    def test_needle(self):
        r = isotropize(aniso([[0, 0, 0]], [np.diag([8.0, 1.0, 1.0])])).radii[0]
        assert r == pytest.approx(np.linalg.det(np.diag([8.0, 1, 1])) ** (1 / 6), rel=1e-12)
        assert r == pytest.approx(1.4142, abs=1e-4)

    def test_non_spd(self):
        with pytest.raises(InvalidInputError):
            isotropize(aniso([[0, 0, 0]], [np.diag([1.0, -1.0, 1.0])]))

    @given(arrays(np.float64, (6, 3), elements=st.floats(-3, 3)))
    def test_preserves_count_and_positions(self, pos):
        c = aniso(pos, np.tile(np.diag([0.5, 1.0, 2.0]), (6, 1, 1)))
        out = isotropize(c)
        assert len(out) == len(c)
        np.testing.assert_array_equal(out.positions, c.positions)
        np.testing.assert_array_equal(out.colors, c.colors)


class TestCentroid:
    def test_equal_radii_mean(self):
        rng = np.random.default_rng(1)
        pos = rng.normal(size=(7, 3))
        np.testing.assert_allclose(centroid(iso(pos, np.full(7, 0.3))), pos.mean(0), atol=1e-12)

    def test_weighted(self):
        c = iso([[0, 0, 0], [1, 0, 0]], [1.0, 2.0])
        assert centroid(c)[0] == pytest.approx(8 / 9, abs=1e-15)

    def test_single(self):
        np.testing.assert_array_equal(centroid(iso([[1, 2, 3]], [0.5])), [1, 2, 3])

    def test_empty(self):
        with pytest.raises(InsufficientPointsError):
            centroid_weights(iso(np.zeros((0, 3)), np.zeros(0)))

    @given(clouds)
    def test_convex_combination(self, data):
        pos, radii = data
        w = centroid_weights(iso(pos, radii))
        assert np.all(w >= 0)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        c = centroid(iso(pos, radii))
        assert np.all(c >= pos.min(0) - 1e-9) and np.all(c <= pos.max(0) + 1e-9)


class TestSerialization:
    def test_roundtrip_both_forms(self, tmp_path):
        rng = np.random.default_rng(2)
        a = aniso(rng.normal(size=(3, 3)), np.tile(np.eye(3), (3, 1, 1)))
        b = iso(rng.normal(size=(3, 3)), [0.1, 0.2, 0.3])
        for c in (a, b):
            path = tmp_path / "c.json"
            save_cloud(c, path)
            d = load_cloud(path)
            assert d.is_isotropic == c.is_isotropic
            np.testing.assert_array_equal(d.positions, c.positions)
        item = json.loads(path.read_text())[0]
        assert set(item) == {"pos", "radius", "rgb", "alpha"}

    def test_invalid_values(self):
        with pytest.raises(InvalidInputError):
            GaussianCloud([[0, 0, 0]], [[2, 0, 0]], [0.5], radii=[1])
        with pytest.raises(InvalidInputError):
            GaussianCloud([[0, 0, 0]], [[0, 0, 0]], [0.0], radii=[1])
        with pytest.raises(InvalidInputError):
            GaussianCloud([[0, 0, 0]], [[0, 0, 0]], [0.5], radii=[-1])
