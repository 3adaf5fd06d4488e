import json
import math

import numpy as np
import pytest

from inhand.geometry import (DEGENERATE_ANGLE, NOISE_REGIMES, PointCloud, Pose2,
                             Pose3, PoseNoise, add_metric, load_point_cloud,
                             magnitude_difference, rotation_angle_between,
                             sample_pose, save_point_cloud, vector_angle_between,
                             wrap_angle)


def test_wrap_angle_range():
    rng = np.random.default_rng(0)
    for a in rng.uniform(-50, 50, size=500):
        w = wrap_angle(float(a))
        assert -math.pi < w <= math.pi
        # same direction modulo a full turn
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-12)
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-12)


def test_wrap_angle_boundary():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(0.0) == 0.0


class TestPose2:
    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            p = Pose2(rng.uniform(-math.pi, math.pi), rng.normal(size=2))
            q = p.compose(p.inverse())
            assert abs(q.angle) < 1e-12
            assert np.allclose(q.translation, 0.0, atol=1e-12)

    def test_apply_matches_manual_rotation(self):
        p = Pose2(0.3, np.array([0.1, -0.2]))
        pts = np.random.default_rng(2).normal(size=(7, 2))
        c, s = math.cos(0.3), math.sin(0.3)
        rot = np.array([[c, -s], [s, c]])
        assert np.allclose(p.apply(pts), pts @ rot.T + p.translation)

    def test_compose_matches_applied_chain(self):
        rng = np.random.default_rng(3)
        a = Pose2(rng.uniform(-3, 3), rng.normal(size=2))
        b = Pose2(rng.uniform(-3, 3), rng.normal(size=2))
        pts = rng.normal(size=(5, 2))
        assert np.allclose(a.compose(b).apply(pts), a.apply(b.apply(pts)))

    def test_array_round_trip(self):
        p = Pose2(-1.2, np.array([3.0, 4.0]))
        q = Pose2.from_array(p.as_array())
        assert q.angle == p.angle
        assert np.array_equal(q.translation, p.translation)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            Pose2(float("nan"), np.zeros(2))
        with pytest.raises(ValueError):
            Pose2(0.0, np.array([np.inf, 0.0]))


class TestPose3:
    def test_compose_inverse_is_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            p = Pose3(rng.normal(size=4), rng.normal(size=3))
            q = p.compose(p.inverse())
            assert np.allclose(q.translation, 0.0, atol=1e-12)
            assert abs(abs(q.quaternion[0]) - 1.0) < 1e-12

    def test_apply_preserves_distances(self):
        rng = np.random.default_rng(5)
        p = Pose3(rng.normal(size=4), rng.normal(size=3))
        pts = rng.normal(size=(6, 3))
        out = p.apply(pts)
        d_in = np.linalg.norm(pts[:, None] - pts[None, :], axis=-1)
        d_out = np.linalg.norm(out[:, None] - out[None, :], axis=-1)
        assert np.allclose(d_in, d_out)

    def test_quaternion_normalized_w_nonnegative(self):
        p = Pose3(np.array([-2.0, 0.0, 0.0, 1.0]), np.zeros(3))
        assert p.quaternion[0] >= 0.0
        assert np.isclose(np.linalg.norm(p.quaternion), 1.0)


def test_sample_pose_zero_noise_exact():
    mean = Pose2(0.7, np.array([0.03, -0.01]))
    rng = np.random.default_rng(6)
    out = sample_pose(mean, PoseNoise(0.0, 0.0), rng)
    assert out.angle == mean.angle
    assert np.array_equal(out.translation, mean.translation)


def test_sample_pose_translation_spread():
    mean = Pose2.identity()
    noise = PoseNoise(sigma_translation=0.005, sigma_rotation=0.1)
    rng = np.random.default_rng(7)
    draws = np.array([sample_pose(mean, noise, rng).translation
                      for _ in range(4000)])
    std = draws.std(axis=0)
    assert np.all(std > 0.0045) and np.all(std < 0.0055)


def test_sample_pose_rotation_spread():
    mean = Pose2.identity()
    rng = np.random.default_rng(8)
    angles = np.array([sample_pose(mean, PoseNoise(0.0, 0.05), rng).angle
                       for _ in range(4000)])
    assert 0.045 < angles.std() < 0.055


def test_noise_regimes_ordering():
    # zero < low < med < high in both components
    keys = ("zero", "low", "med", "high")
    assert set(NOISE_REGIMES) == set(keys)
    trans = [NOISE_REGIMES[k].sigma_translation for k in keys]
    rots = [NOISE_REGIMES[k].sigma_rotation for k in keys]
    assert trans == sorted(trans) and rots == sorted(rots)
    assert trans[0] == 0.0 and rots[0] == 0.0


def test_pose_noise_scaled():
    n = PoseNoise(0.004, 0.02).scaled(2.5)
    assert n.sigma_translation == pytest.approx(0.01)
    assert n.sigma_rotation == pytest.approx(0.05)


class TestAngles:
    def test_rotation_angle_between_scalars(self):
        assert rotation_angle_between(0.1, 0.4) == pytest.approx(0.3)
        # shortest way around the circle
        assert rotation_angle_between(math.pi - 0.05, -math.pi + 0.05) == \
            pytest.approx(0.1)

    def test_rotation_angle_between_quaternions(self):
        half = 0.15
        qa = np.array([1.0, 0.0, 0.0, 0.0])
        qb = np.array([math.cos(half), 0.0, 0.0, math.sin(half)])
        assert rotation_angle_between(qa, qb) == pytest.approx(0.3)

    def test_vector_angle_between(self):
        assert vector_angle_between(np.array([1.0, 0.0]),
                                    np.array([0.0, 2.0])) == pytest.approx(math.pi / 2)
        assert vector_angle_between(np.array([2.0, 0.0]),
                                    np.array([5.0, 0.0])) == pytest.approx(0.0)
        assert vector_angle_between(np.array([1.0, 0.0]),
                                    np.array([-3.0, 0.0])) == pytest.approx(math.pi)

    def test_vector_angle_zero_operand_is_degenerate(self):
        out = vector_angle_between(np.zeros(2), np.array([1.0, 0.0]))
        assert out == DEGENERATE_ANGLE

    def test_magnitude_difference_signed(self):
        assert magnitude_difference(np.array([3.0, 4.0]),
                                    np.array([1.0, 0.0])) == pytest.approx(4.0)
        assert magnitude_difference(np.array([1.0, 0.0]),
                                    np.array([3.0, 4.0])) == pytest.approx(-4.0)


class TestAddMetric:
    def test_identity_is_zero(self):
        cloud = PointCloud(np.random.default_rng(9).normal(size=(12, 2)))
        assert add_metric(cloud, Pose2.identity(), Pose2.identity()) == 0.0

    def test_pure_translation(self):
        cloud = PointCloud(np.random.default_rng(10).normal(size=(8, 2)))
        a = Pose2.identity()
        b = Pose2(0.0, np.array([0.003, -0.004]))
        assert add_metric(cloud, a, b) == pytest.approx(0.005)

    def test_matches_mean_vertex_distance(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            pts = rng.normal(size=(9, 2))
            cloud = PointCloud(pts)
            a = Pose2(rng.uniform(-3, 3), rng.normal(size=2))
            b = Pose2(rng.uniform(-3, 3), rng.normal(size=2))
            expect = np.mean(np.linalg.norm(a.apply(pts) - b.apply(pts), axis=1))
            assert add_metric(cloud, a, b) == pytest.approx(expect, rel=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(12)
        cloud = PointCloud(rng.normal(size=(5, 2)))
        a = Pose2(0.4, np.array([0.1, 0.0]))
        b = Pose2(-0.2, np.array([0.0, 0.2]))
        assert add_metric(cloud, a, b) == pytest.approx(add_metric(cloud, b, a))


class TestPointCloudIO:
    def test_round_trip(self, tmp_path):
        pts = np.random.default_rng(13).normal(size=(6, 2))
        path = tmp_path / "cloud.json"
        save_point_cloud(PointCloud(pts), path)
        back = load_point_cloud(path)
        assert np.array_equal(back.points, pts)

    def test_rejects_bad_schema(self, tmp_path):
        path = tmp_path / "cloud.json"
        path.write_text(json.dumps({"schema": "wrong", "points": [[0, 0]]}))
        with pytest.raises(ValueError):
            load_point_cloud(path)

    def test_rejects_bad_shape(self):
        with pytest.raises(ValueError):
            PointCloud(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            PointCloud(np.zeros((4, 4)))
