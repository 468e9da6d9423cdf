import json
import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from projectile_splat.errors import InvalidInputError, OutOfViewError
from projectile_splat.gaussians import centroid
from projectile_splat.physics import PhysicsConfig, acc_consistency_loss, finite_diff_acceleration
from projectile_splat.render import project
from projectile_splat.se3 import apply_pose, quat_angle, read_pose_csv
from projectile_splat.simulator import (
    SceneConfig, generate_trajectory, load_scene, procedural_cloud, read_flow_csv, scene_cloud,
    simulate, write_sequence,
)

DOWN = [0.0, -1.0, 0.0]


def small_scene(**kw):
    base = dict(object={"shape": "sphere", "n": 40, "seed": 1}, num_frames=8, flow_noise_std=0.0)
    base.update(kw)
    return SceneConfig(**base)


class TestTrajectory:
    def test_free_fall_example(self):
        cfg = SceneConfig(v0=[0, 0, 0], omega=[0, 0, 0], num_frames=3,
                          physics=PhysicsConfig(DOWN, 0.1, 9.8))
        t = [p.translation for p in generate_trajectory(cfg)]
        np.testing.assert_allclose(t[0], 0, atol=0)
        np.testing.assert_allclose(t[1], [0, -0.049, 0], atol=1e-15)
        np.testing.assert_allclose(t[2], [0, -0.196, 0], atol=1e-15)

    def test_no_spin_keeps_identity(self):
        cfg = SceneConfig(omega=[0, 0, 0], num_frames=10)
        for p in generate_trajectory(cfg):
            np.testing.assert_array_equal(p.rotation, [1, 0, 0, 0])

    def test_constant_spin_rate(self):
        cfg = SceneConfig(omega=[0.0, 0.0, 3.0], num_frames=6)
        poses = generate_trajectory(cfg)
        for a, b in zip(poses, poses[1:]):
            assert quat_angle(a.rotation, b.rotation) == pytest.approx(3.0 * cfg.dt, rel=1e-9)

    @settings(max_examples=30)
    @given(st.lists(st.floats(-5, 5), min_size=3, max_size=3),
           st.lists(st.floats(-3, 3), min_size=3, max_size=3),
           st.integers(30, 120))
    def test_second_difference_is_gravity(self, v0, omega, frames):
        cfg = SceneConfig(v0=v0, omega=omega, num_frames=frames)
        t = np.array([p.translation for p in generate_trajectory(cfg)])
        dd = t[2:] - 2 * t[1:-1] + t[:-2]
        g = cfg.physics.gravity_vector * cfg.dt ** 2
        np.testing.assert_allclose(dd, np.broadcast_to(g, dd.shape),
                                   atol=16 * np.finfo(float).eps * (np.abs(t).max() + 1))


class TestProceduralCloud:
    def test_single_kernel(self):
        c = procedural_cloud("sphere", 1)
        assert len(c) == 1
        np.testing.assert_array_equal(c.positions, 0)

    @pytest.mark.parametrize("shape", ["sphere", "box", "dumbbell"])
    def test_centroid_near_origin(self, shape):
        c = procedural_cloud(shape, 400, seed=3)
        assert np.linalg.norm(centroid(c)) < 0.05

    @pytest.mark.parametrize("shape", ["sphere", "box", "dumbbell"])
    def test_size(self, shape):
        c = procedural_cloud(shape, 200, diameter=2.0)
        assert c.diameter() <= 2.0 + 1e-9
        assert c.diameter() > 1.5
        assert c.is_isotropic

    def test_unknown_shape(self):
        with pytest.raises(InvalidInputError):
            procedural_cloud("torus", 10)

    def test_bad_count(self):
        with pytest.raises(InvalidInputError):
            procedural_cloud("sphere", 0)


class TestFrames:
    def test_noiseless_flow_is_true_motion(self):
        seq = simulate(small_scene())
        pix = np.array([project(c, seq.camera)[0] for c in seq.centroids])
        np.testing.assert_allclose(seq.flow[1:], np.diff(pix, axis=0), atol=1e-12)
        np.testing.assert_array_equal(seq.flow[0], 0)

    def test_flow_noise_std(self):
        clean = simulate(small_scene(num_frames=40))
        noisy = simulate(small_scene(num_frames=40, flow_noise_std=2.0))
        err = (noisy.flow - clean.flow)[1:]
        assert 1.5 < err.std() < 2.5

    def test_static_scene(self):
        seq = simulate(small_scene(v0=[0, 0, 0], omega=[0, 0, 0],
                                   physics=PhysicsConfig(DOWN, 1 / 30, 0.0)))
        for img in seq.images[1:]:
            np.testing.assert_array_equal(img.rgb, seq.images[0].rgb)
        np.testing.assert_array_equal(seq.flow, 0)

    def test_deterministic(self):
        a = simulate(small_scene(flow_noise_std=1.0, seed=4))
        b = simulate(small_scene(flow_noise_std=1.0, seed=4))
        np.testing.assert_array_equal(a.flow, b.flow)
        for x, y in zip(a.images, b.images):
            np.testing.assert_array_equal(x.rgb, y.rgb)

    def test_rigid(self):
        seq = simulate(small_scene())
        ref = seq.cloud.positions
        d0 = np.linalg.norm(ref[:, None] - ref[None], axis=-1)
        for pose in seq.poses:
            p = apply_pose(pose, seq.cloud).positions
            np.testing.assert_allclose(np.linalg.norm(p[:, None] - p[None], axis=-1), d0, atol=1e-12)

    def test_default_scene_stays_in_view(self):
        seq = simulate(SceneConfig())
        areas = np.array([m.sum() for m in seq.masks])
        assert areas.min() > 0
        assert areas.max() / areas.min() < 1.3

    def test_out_of_view(self):
        with pytest.raises(OutOfViewError) as info:
            simulate(small_scene(v0=[60, 0, 0], num_frames=10))
        assert info.value.frame is not None and info.value.frame > 0

    def test_physics_consistent(self):
        cfg = SceneConfig(num_frames=30)
        cloud = scene_cloud(cfg)
        c = np.array([centroid(apply_pose(p, cloud)) for p in generate_trajectory(cfg)])
        g = cfg.physics.gravity_vector
        for n in range(2, len(c)):
            a = finite_diff_acceleration(c[n - 2], c[n - 1], c[n], cfg.dt)
            assert acc_consistency_loss(g, a, cfg.physics.gravity_dir) < 1e-18


def test_write_sequence(tmp_path):
    seq = simulate(small_scene(num_frames=4, flow_noise_std=0.5))
    out = tmp_path / "scene"
    write_sequence(seq, str(out))
    assert sorted(os.listdir(out / "frames")) == [f"{n:04d}.png" for n in range(4)]
    assert sorted(os.listdir(out / "masks")) == [f"{n:04d}.png" for n in range(4)]
    poses = read_pose_csv(str(out / "gt_poses.csv"))
    for a, b in zip(poses, seq.poses):
        np.testing.assert_array_equal(a.params(), b.params())
    np.testing.assert_array_equal(read_flow_csv(str(out / "flow_obs.csv")), seq.flow)
    again = load_scene(str(out / "scene.json"))
    assert again.num_frames == 4
    np.testing.assert_array_equal(simulate(again).flow, seq.flow)
    with open(out / "scene.json") as fh:
        assert json.load(fh)["object"] == {"path": "cloud.json"}


def test_scene_roundtrip():
    cfg = small_scene(v0=[1, 2, 3], seed=9)
    again = SceneConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


def test_scene_validation():
    with pytest.raises(InvalidInputError):
        SceneConfig(num_frames=2)
    with pytest.raises(InvalidInputError):
        SceneConfig(flow_noise_std=-1)
