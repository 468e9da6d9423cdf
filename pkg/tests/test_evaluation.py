import numpy as np
import pytest
from hypothesis import given, strategies as st

from projectile_splat.errors import EmptySilhouetteError, InvalidInputError
from projectile_splat.evaluation import (
    BBox, MetricsReport, compare, evaluate_dirs, iou, silhouette_bbox, trajectory_errors,
)
from projectile_splat.simulator import SceneConfig, simulate, write_sequence


def brute_iou(a, b, size=40):
    """Pixel-count IoU of two inclusive boxes."""
    def fill(box):
        m = np.zeros((size, size), dtype=bool)
        m[int(box.min[1]):int(box.max[1]) + 1, int(box.min[0]):int(box.max[0]) + 1] = True
        return m
    ma, mb = fill(a), fill(b)
    return (ma & mb).sum() / (ma | mb).sum()


boxes = st.tuples(st.integers(0, 30), st.integers(0, 30), st.integers(0, 9), st.integers(0, 9)).map(
    lambda t: BBox((t[0], t[1]), (t[0] + t[2], t[1] + t[3])))


class TestBBox:
    def test_from_mask(self):
        m = np.zeros((10, 12), dtype=bool)
        m[2:5, 3:9] = True
        b = silhouette_bbox(m)
        np.testing.assert_array_equal(b.min, [3, 2])
        np.testing.assert_array_equal(b.max, [8, 4])
        assert b.area == 18
        np.testing.assert_array_equal(b.center, [5.5, 3])

    def test_single_pixel(self):
        m = np.zeros((5, 5), dtype=bool)
        m[1, 3] = True
        b = silhouette_bbox(m)
        assert b.area == 1

    def test_empty(self):
        with pytest.raises(EmptySilhouetteError):
            silhouette_bbox(np.zeros((4, 4), dtype=bool))

    def test_inverted(self):
        with pytest.raises(InvalidInputError):
            BBox((3, 3), (2, 5))


class TestIoU:
    def test_identical(self):
        b = BBox((0, 0), (9, 9))
        assert iou(b, b) == 1.0

    def test_disjoint(self):
        assert iou(BBox((0, 0), (4, 4)), BBox((10, 10), (12, 12))) == 0.0

    def test_half_shift(self):
        # two 2x1 boxes overlapping in one pixel: 1 / (2 + 2 - 1)
        assert iou(BBox((0, 0), (1, 0)), BBox((1, 0), (2, 0))) == pytest.approx(1 / 3)

    @given(boxes, boxes)
    def test_matches_pixel_count(self, a, b):
        assert iou(a, b) == pytest.approx(brute_iou(a, b), abs=1e-12)

    @given(boxes, boxes)
    def test_symmetric_and_bounded(self, a, b):
        assert iou(a, b) == iou(b, a)
        assert 0.0 <= iou(a, b) <= 1.0


class TestTrajectoryErrors:
    def test_worked_example(self):
        rec = np.array([[0.0, 0.0], [3.0, 0.0], [0.0, 4.0]])
        ate, rmse = trajectory_errors(rec, np.zeros((3, 2)), 1.0)
        assert ate == pytest.approx(7 / 3)
        assert rmse == pytest.approx(np.sqrt(25 / 3))

    def test_normalizer(self):
        ate, _ = trajectory_errors([[2.0, 0.0]], [[0.0, 0.0]], 4.0)
        assert ate == 0.5

    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=30))
    def test_rmse_at_least_ate(self, vals):
        rec = np.array(vals).reshape(-1, 1)[: len(vals) // 3 * 3].reshape(-1, 3)
        ate, rmse = trajectory_errors(rec, np.zeros_like(rec), 2.0)
        assert rmse >= ate - 1e-12
        assert ate >= 0

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInputError):
            trajectory_errors(np.zeros((3, 2)), np.zeros((4, 2)), 1.0)

    def test_bad_normalizer(self):
        with pytest.raises(InvalidInputError):
            trajectory_errors(np.zeros((3, 2)), np.zeros((3, 2)), 0.0)


def test_compare_perfect():
    masks = [np.pad(np.ones((3, 4), dtype=bool), 5) for _ in range(4)]
    c = np.random.default_rng(0).normal(size=(4, 3))
    r = compare(masks, masks, c, c, (14, 13), 1.0)
    assert (r.mean_iou, r.ate, r.rmse, r.ate_3d, r.rmse_3d) == (1.0, 0.0, 0.0, 0.0, 0.0)


def test_compare_empty_recovery():
    gt = [np.pad(np.ones((2, 2), dtype=bool), 3)]
    r = compare([np.zeros_like(gt[0])], gt, np.zeros((1, 3)), np.zeros((1, 3)), (8, 8), 1.0)
    assert r.mean_iou == 0.0
    assert r.ate == 1.0


def test_ground_truth_against_itself(tmp_path):
    cfg = SceneConfig(object={"shape": "box", "n": 30, "seed": 2}, num_frames=4)
    seq = simulate(cfg)
    gt = tmp_path / "gt"
    write_sequence(seq, str(gt))
    # a recovery directory that just repeats the ground truth
    res = tmp_path / "res"
    res.mkdir()
    (res / "recovered_poses.csv").write_text((gt / "gt_poses.csv").read_text())
    (res / "cloud.json").write_text((gt / "cloud.json").read_text())
    report = evaluate_dirs(str(res), str(gt))
    assert report.mean_iou == 1.0
    assert report.ate == 0.0
    assert report.ate_3d == 0.0
    report.write(str(res))
    assert (res / "metrics.json").exists()
    lines = (res / "metrics_per_frame.csv").read_text().splitlines()
    assert lines[0] == "frame,iou,center_error,centroid_error_3d"
    assert len(lines) == 5


def test_report_dict():
    r = MetricsReport(0.9, 0.01, 0.02, 0.03, 0.04)
    assert set(r.to_dict()) == {"mean_iou", "ate", "rmse", "ate_3d", "rmse_3d", "per_frame"}
